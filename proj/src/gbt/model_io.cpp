#include "tdcast/errors.hpp"
#include "tdcast/gbt/booster.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace tdcast::gbt {

namespace {

constexpr const char* kMagic = "tdcast-gbt";
constexpr int kVersion = 1;

std::istringstream expect_line(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("gbt model: unexpected end of file, wanted '" + key + "'");
    std::istringstream ls(line);
    std::string got;
    ls >> got;
    if (got != key) throw DataError("gbt model: expected '" + key + "', got '" + got + "'");
    return ls;
}

}  // namespace

void write_gbt_model(std::ostream& out, const GbtModel& model) {
    const auto precision = out.precision(17);
    out << kMagic << ' ' << kVersion << '\n';
    out << "loss " << to_string(model.loss_) << '\n';
    out << "base_score " << model.base_score_ << '\n';
    out << "learning_rate " << model.learning_rate_ << '\n';
    out << "n_features " << model.n_features_ << '\n';
    out << "r_hat ";
    if (model.r_hat_) {
        out << *model.r_hat_ << '\n';
    } else {
        out << "none\n";
    }
    out << "trees " << model.trees_.size() << '\n';
    for (const auto& tree : model.trees_) {
        out << "tree " << tree.nodes.size() << '\n';
        for (const auto& n : tree.nodes) {
            out << n.feature << ' ' << n.threshold << ' ' << n.left << ' ' << n.right << ' ' << n.value << '\n';
        }
    }
    out.precision(precision);
}

GbtModel read_gbt_model(std::istream& in) {
    GbtModel model;
    {
        auto ls = expect_line(in, kMagic);
        int version = 0;
        if (!(ls >> version) || version != kVersion) throw DataError("gbt model: unsupported version");
    }
    {
        auto ls = expect_line(in, "loss");
        std::string text;
        ls >> text;
        model.loss_ = parse_loss(text);
    }
    if (!(expect_line(in, "base_score") >> model.base_score_)) throw DataError("gbt model: bad base_score");
    if (!(expect_line(in, "learning_rate") >> model.learning_rate_)) throw DataError("gbt model: bad learning_rate");
    if (!(expect_line(in, "n_features") >> model.n_features_)) throw DataError("gbt model: bad n_features");
    {
        auto ls = expect_line(in, "r_hat");
        std::string text;
        ls >> text;
        if (text != "none") model.r_hat_ = std::stod(text);
    }
    std::size_t n_trees = 0;
    if (!(expect_line(in, "trees") >> n_trees)) throw DataError("gbt model: bad tree count");
    model.trees_.resize(n_trees);
    for (auto& tree : model.trees_) {
        std::size_t n_nodes = 0;
        if (!(expect_line(in, "tree") >> n_nodes) || n_nodes == 0) throw DataError("gbt model: bad node count");
        tree.nodes.resize(n_nodes);
        for (auto& node : tree.nodes) {
            if (!(in >> node.feature >> node.threshold >> node.left >> node.right >> node.value)) {
                throw DataError("gbt model: malformed node");
            }
            const auto limit = static_cast<int>(n_nodes);
            if (node.feature >= static_cast<int>(model.n_features_) ||
                (node.feature >= 0 && (node.left <= 0 || node.right <= 0 || node.left >= limit || node.right >= limit))) {
                throw DataError("gbt model: node references out of range");
            }
        }
        in >> std::ws;
    }
    return model;
}

}  // namespace tdcast::gbt
