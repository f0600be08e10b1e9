// SPDX-License-Identifier: Apache-2.0
// gdasjae: cell search, cross-validated evaluation, exhaustive oracle and
// reporting for the joint autoencoder classifier.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gdasjae/cli.hpp"

namespace {

using gdasjae::cli::CommandOptions;

std::string read_genotype_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open genotype file '" + path + "'");
  std::string line;
  std::getline(is, line);
  return line;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gumbel-softmax cell search for multimodal vulnerability classifiers", "gdasjae"};
  app.set_version_flag("--version", gdasjae::cli::kVersion);
  app.require_subcommand(1);

  CommandOptions opts;
  std::string config, out = ".", space;
  std::uint64_t seed = 0;
  unsigned jobs = gdasjae::default_jobs();
  auto common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override every seed in the configuration");
    sub->add_option("--space", space, "search space: desk (3 nodes) or full (4 nodes)")
        ->check(CLI::IsMember({"desk", "full"}));
    if (with_out) sub->add_option("--out", out, "output directory")->capture_default_str();
  };

  CLI::App* search = app.add_subcommand("search", "search a cell on the train/validation splits");
  common(search);

  CLI::App* eval = app.add_subcommand("eval", "5x2 cross-validation of a genotype or baseline");
  common(eval);
  std::string genotype, genotype_file, baseline;
  auto* g_opt = eval->add_option("--genotype", genotype, "genotype string");
  auto* gf_opt = eval->add_option("--genotype-file", genotype_file, "file whose first line is a genotype")
                     ->check(CLI::ExistingFile);
  auto* b_opt = eval->add_option("--baseline", baseline, "fixed mixing baseline")
                    ->check(CLI::IsMember({"mixing50", "mixing100"}));
  g_opt->excludes(gf_opt)->excludes(b_opt);
  gf_opt->excludes(b_opt);
  eval->add_option("--jobs", jobs, "parallel fits")->check(CLI::PositiveNumber);

  CLI::App* oracle = app.add_subcommand("oracle", "train and rank every genotype of the space");
  common(oracle);
  std::string compare;
  bool allow_full = false;
  oracle->add_option("--compare", compare, "report the rank of this genotype");
  oracle->add_flag("--allow-full", allow_full, "permit the 59049-genotype space");
  oracle->add_option("--jobs", jobs, "parallel fits")->check(CLI::PositiveNumber);

  CLI::App* gen = app.add_subcommand("genotype", "genotype grammar tools");
  gen->require_subcommand(1);
  std::string text;
  CLI::App* g_parse = gen->add_subcommand("parse", "validate a genotype string");
  g_parse->add_option("text", text, "genotype")->required();
  CLI::App* g_canon = gen->add_subcommand("canon", "print the canonical form");
  g_canon->add_option("text", text, "genotype")->required();
  CLI::App* g_enum = gen->add_subcommand("enumerate", "list every genotype of a space");
  std::string enum_space = "full";
  g_enum->add_option("--space", enum_space, "desk or full")->check(CLI::IsMember({"desk", "full"}))->capture_default_str();

  CLI::App* synth = app.add_subcommand("synth", "write the configured synthetic dataset");
  common(synth);

  CLI::App* report = app.add_subcommand("report", "chart and summary for a run directory");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "directory holding curves.csv")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!config.empty()) opts.config_path = config;
    for (CLI::App* sub : {search, eval, oracle, synth}) {
      if (sub->parsed() && sub->count("--seed")) opts.seed = seed;
    }
    if (!space.empty()) opts.space = gdasjae::cli::space_from_name(space);
    opts.out_dir = out;
    opts.jobs = jobs;

    if (search->parsed()) {
      gdasjae::cli::cmd_search(opts);
    } else if (eval->parsed()) {
      gdasjae::MixingSpec mix;
      if (!baseline.empty()) {
        mix = baseline == "mixing50" ? gdasjae::MixingSpec::baseline50() : gdasjae::MixingSpec::baseline100();
      } else {
        const std::string g = genotype_file.empty() ? genotype : read_genotype_file(genotype_file);
        if (g.empty()) throw gdasjae::ConfigError("eval: give --genotype, --genotype-file or --baseline");
        mix = gdasjae::MixingSpec::fixed(gdasjae::parse(g));
      }
      gdasjae::cli::cmd_eval(opts, mix);
    } else if (oracle->parsed()) {
      std::optional<std::string> cmp;
      if (!compare.empty()) cmp = compare;
      gdasjae::cli::cmd_oracle(opts, cmp, allow_full);
    } else if (g_parse->parsed()) {
      return gdasjae::cli::cmd_genotype_parse(text, std::cout, std::cerr);
    } else if (g_canon->parsed()) {
      return gdasjae::cli::cmd_genotype_canon(text, std::cout, std::cerr);
    } else if (g_enum->parsed()) {
      gdasjae::cli::cmd_genotype_enumerate(gdasjae::cli::space_from_name(enum_space), std::cout);
    } else if (synth->parsed()) {
      gdasjae::cli::cmd_synth(opts);
    } else if (report->parsed()) {
      gdasjae::cli::cmd_report(run_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
