#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "varpen/cli.hpp"

int main(int argc, char** argv) {
  using namespace varpen;
  CLI::App app{"Penalized optimal control of gradient flows"};
  app.require_subcommand(1);
  app.fallthrough();
  CliOptions opts;
  app.add_option("--out", opts.out, "Output directory")->capture_default_str();
  app.add_option("--seed", opts.seed, "Random seed")->capture_default_str();
  app.add_option("--jobs", opts.jobs, "Worker threads for independent evaluations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string figure;
  auto* reproduce = app.add_subcommand("reproduce", "Reproduce a figure's curves and minimizers");
  reproduce->add_option("figure", figure, "fig1 or fig2")
      ->required()
      ->check(CLI::IsMember({"fig1", "fig2"}));

  std::string sweep_config;
  auto* sweep = app.add_subcommand("sweep", "Run an eps sweep from a config file");
  sweep->add_option("config", sweep_config)->required();

  std::string grad_config;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of grad E");
  gradcheck->add_option("config", grad_config)->required();

  DemoParams demo;
  auto* generic = app.add_subcommand("generic-demo", "Integrate the thermalized oscillator");
  generic->add_option("--nu", demo.oscillator.nu)->capture_default_str();
  generic->add_option("--lambda", demo.oscillator.lambda)->capture_default_str();
  generic->add_option("--kappa", demo.oscillator.kappa)->capture_default_str();
  generic->add_option("--T", demo.horizon)->capture_default_str();
  generic->add_option("--N", demo.intervals)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*reproduce) return cmd_reproduce(figure, opts, std::cout);
    if (*sweep) return cmd_sweep(sweep_config, opts, std::cout);
    if (*gradcheck) return cmd_gradcheck(grad_config, opts, std::cout);
    if (*generic) return cmd_generic_demo(demo, opts, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
