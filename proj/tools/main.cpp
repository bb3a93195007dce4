#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sc2/cli.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<int> parallelism;
    std::optional<std::string> cache_dir;
    std::optional<std::string> templates_dir;
    std::vector<int> c_values;
    bool dry_run = false;
    bool force = false;

    sc2::cli::CliFlags flags() const {
        sc2::cli::CliFlags f;
        f.overrides.seed = seed;
        f.overrides.parallelism = parallelism;
        f.overrides.cache_dir = cache_dir;
        f.overrides.templates_dir = templates_dir;
        f.overrides.c_values = c_values;
        f.dry_run = dry_run;
        f.force = force;
        return f;
    }
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "TOML run configuration")->required();
    cmd->add_option("--seed", args.seed, "override run.seed");
    cmd->add_option("--parallelism", args.parallelism, "override run.parallelism");
    cmd->add_option("--cache-dir", args.cache_dir, "override run.cache_dir");
    cmd->add_option("--templates", args.templates_dir, "override run.templates");
    cmd->add_option("--c-values", args.c_values, "|C| values for sweep")->delimiter(',');
    cmd->add_flag("--dry-run", args.dry_run,
                  "render the first item's prompts, zero backend calls");
    cmd->add_flag("--force", args.force, "rebuild even when outputs look up to date");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"structured comparative reasoning engine for text preference prediction"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* run = app.add_subcommand("run", "evaluate one method over a dataset");
    add_common_flags(run, args);
    CLI::App* aspects = app.add_subcommand("aspects-build", "build and persist offline aspects");
    add_common_flags(aspects, args);
    CLI::App* sweep = app.add_subcommand("sweep", "evaluate SC2 across |C| values");
    add_common_flags(sweep, args);

    std::string input;
    std::string output;
    uint64_t convert_seed = 0;
    auto add_convert = [&](const char* name, const char* help) {
        CLI::App* cmd = app.add_subcommand(name, help);
        cmd->add_option("-i,--input", input, "raw JSONL input")->required();
        cmd->add_option("-o,--output", output, "dataset JSONL output")->required();
        cmd->add_option("--seed", convert_seed, "seed for side assignment");
        return cmd;
    };
    CLI::App* trec = add_convert("convert-trec", "graded query-document triplets -> dataset");
    CLI::App* tldr = add_convert("convert-tldr", "graded summary pairs -> dataset");
    CLI::App* hh = add_convert("convert-hh", "chosen/rejected dialogue pairs -> dataset");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return sc2::cli::cmd_run(args.config_path, args.flags(), std::cout, std::cerr);
    if (aspects->parsed())
        return sc2::cli::cmd_aspects_build(args.config_path, args.flags(), std::cout, std::cerr);
    if (sweep->parsed())
        return sc2::cli::cmd_sweep(args.config_path, args.flags(), std::cout, std::cerr);
    if (trec->parsed())
        return sc2::cli::cmd_convert(sc2::cli::ConvertKind::Trec, input, output, convert_seed,
                                     std::cout, std::cerr);
    if (tldr->parsed())
        return sc2::cli::cmd_convert(sc2::cli::ConvertKind::Tldr, input, output, convert_seed,
                                     std::cout, std::cerr);
    if (hh->parsed())
        return sc2::cli::cmd_convert(sc2::cli::ConvertKind::Hh, input, output, convert_seed,
                                     std::cout, std::cerr);
    return 1;
}
