#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfm/commands.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

sfm::RunConfig load_config(const CommonOptions& opts) {
  sfm::Config c = opts.config_path.empty() ? sfm::Config{} : sfm::Config::from_file(opts.config_path);
  for (const auto& o : opts.overrides) c.apply_override(o);
  return sfm::to_run_config(c);
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--set", opts.overrides, "override one key, as key=value (repeatable)")->allow_extra_args(false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic feature mapping classifiers with PAC-Bayes bounds"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print every config key with its default and exit");

  CommonOptions train_opts, predict_opts, bench_opts, bound_opts;
  auto* train = app.add_subcommand("train", "train one binary task and write model and telemetry");
  add_common(train, train_opts);
  auto* predict = app.add_subcommand("predict", "score data.path with model.path");
  add_common(predict, predict_opts);
  auto* bench = app.add_subcommand("benchmark", "one-vs-rest over random partitions");
  add_common(bench, bench_opts);
  auto* bound = app.add_subcommand("bound-report", "evaluate both bounds of model.path on data.path");
  add_common(bound, bound_opts);
  auto* selftest = app.add_subcommand("selftest", "run the numerical self-checks");

  for (auto* cmd : {train, predict, bench, bound}) {
    cmd->add_flag("--print-config", print_config, "print the resolved config and exit");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_config) {
      const CommonOptions* opts = train->parsed()     ? &train_opts
                                  : predict->parsed() ? &predict_opts
                                  : bench->parsed()   ? &bench_opts
                                  : bound->parsed()   ? &bound_opts
                                                      : nullptr;
      sfm::Config c = opts && !opts->config_path.empty() ? sfm::Config::from_file(opts->config_path) : sfm::Config{};
      if (opts) {
        for (const auto& o : opts->overrides) c.apply_override(o);
      }
      sfm::print_config(std::cout, c);
      return 0;
    }
    if (train->parsed()) {
      sfm::cmd_train(load_config(train_opts), std::cout);
      return 0;
    }
    if (predict->parsed()) {
      sfm::cmd_predict(load_config(predict_opts), std::cout);
      return 0;
    }
    if (bench->parsed()) {
      const auto res = sfm::cmd_benchmark(load_config(bench_opts), std::cout);
      return res.failures.empty() ? 0 : 3;
    }
    if (bound->parsed()) {
      sfm::cmd_bound_report(load_config(bound_opts), std::cout);
      return 0;
    }
    if (selftest->parsed()) return sfm::cmd_selftest(std::cout) ? 0 : 1;
    std::cout << app.help();
    return 2;
  } catch (const sfm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const sfm::ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
  } catch (const sfm::TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}
