#include "tdcast/series.hpp"
#include "tdcast/synthetic.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"tdcast-synth: write a synthetic two-level dataset"};
    std::string kind = "poisson";
    std::string out = "synthetic";
    std::string format = "long";
    std::size_t aggregates = 50;
    std::size_t children = 5;
    std::size_t days = 400;
    std::uint64_t seed = 1;
    app.add_option("--kind", kind, "poisson | m5")->check(CLI::IsMember({"poisson", "m5"}));
    app.add_option("--out", out, "output directory");
    app.add_option("--format", format, "long | wide")->check(CLI::IsMember({"long", "wide"}));
    app.add_option("--aggregates", aggregates, "aggregates (items for m5)");
    app.add_option("--children", children, "children per aggregate (stores for m5)");
    app.add_option("--days", days, "series length");
    app.add_option("--seed", seed, "random seed");
    CLI11_PARSE(app, argc, argv);

    const auto data = kind == "m5" ? tdcast::synth::m5_like(aggregates, children, days, seed)
                                   : tdcast::synth::poisson_hierarchy(aggregates, children, days, seed);
    std::filesystem::create_directories(out);
    const std::filesystem::path dir(out);
    {
        std::ofstream lower(dir / "lower.csv");
        if (format == "wide") {
            tdcast::write_wide_csv(lower, data.lower);
        } else {
            tdcast::write_long_csv(lower, data.lower);
        }
    }
    std::ofstream hierarchy(dir / "hierarchy.csv");
    tdcast::write_hierarchy_csv(hierarchy, data.parent_of);
    std::cout << "wrote " << data.lower.size() << " series to " << out << '\n';
    return 0;
}
