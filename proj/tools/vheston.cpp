// vheston: optimal portfolio strategies and verification runs under the
// Volterra Heston model. See README.md for the config format.

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "vheston/cli.hpp"

int main(int argc, char** argv) {
  using vheston::Command;
  CLI::App app{"Volterra Heston portfolio toolkit"};
  app.require_subcommand(1, 1);

  std::string config_path;
  vheston::RunOptions opts;
  std::string out_dir = ".";

  const std::vector<std::pair<Command, const char*>> commands{
      {Command::riccati, "Solve the Riccati-Volterra equation for psi, write riccati.csv"},
      {Command::strategy, "Optimal strategy A(t), write strategy.csv"},
      {Command::check, "Feasibility conditions, write check.json (exit 3 if they fail)"},
      {Command::simulate, "Monte Carlo run of the optimal strategy, write simulate.json and moments.csv"},
      {Command::verify, "Monte Carlo check of the M_0 value identity, write verify.json"},
      {Command::skew, "ATM implied volatility and skew term structure, write skew.csv"},
  };
  std::vector<std::pair<Command, CLI::App*>> subs;
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(vheston::command_name(cmd), help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "Output directory (created if missing)");
    sub->add_flag("--force", opts.force, "Proceed even if the feasibility conditions fail");
    sub->add_option("--threads", opts.threads, "Worker threads for Monte Carlo and skew")->check(CLI::PositiveNumber);
    subs.emplace_back(cmd, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : vheston::kExitConfig;
  }

  opts.out_dir = out_dir;
  for (const auto& [cmd, sub] : subs) {
    if (sub->parsed()) return vheston::run(cmd, config_path, opts);
  }
  return vheston::kExitConfig;
}
