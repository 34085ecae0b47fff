// ucoassoc command line: simulate, train, evaluate, associate, saliency.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>

#include <CLI11.hpp>

#include "ucoassoc/config.hpp"
#include "ucoassoc/error.hpp"
#include "ucoassoc/pipeline.hpp"

namespace {

using namespace ucoassoc;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += (c == '\n') ? ' ' : c;
  }
  return out;
}

int report_error(std::string_view kind, const std::string& message) {
  std::cerr << "error class=" << kind << " message=\"" << escape(message) << "\"\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncorrelated optical observation association"};
  app.require_subcommand(1, 1);

  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> s_list;
  std::optional<double> d;
  std::optional<std::string> observations;
  std::optional<std::string> pairs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--out", out_dir, "run directory override");
    return sub;
  };
  auto* simulate = add_common(app.add_subcommand("simulate", "generate train/val/test observations"));
  auto* train = add_common(app.add_subcommand("train", "sample pairs and train the classifier"));
  auto* evaluate = add_common(app.add_subcommand("evaluate", "accuracy, score histogram, calibration"));
  auto* associate = add_common(app.add_subcommand("associate", "uniform cost triplet search"));
  associate->add_option("--s", s_list, "comma separated solutions per base observation");
  associate->add_option("--d", d, "prune threshold on p(no_match)");
  associate->add_option("--observations", observations, "observation CSV (default: run subset)");
  auto* saliency = add_common(app.add_subcommand("saliency", "input-gradient saliency maps"));
  saliency->add_option("--pairs", pairs, "CSV with header first_obs,second_obs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what());
  }

  try {
    auto cfg = load_config(config_path);
    ConfigOverrides ov;
    ov.seed = seed;
    if (out_dir) ov.out_dir = *out_dir;
    if (s_list) ov.s_values = parse_size_list(*s_list);
    ov.prune_threshold = d;
    apply_overrides(cfg, ov);

    if (*simulate) {
      const auto r = pipeline::cmd_simulate(cfg);
      std::printf("simulate observations=%zu/%zu/%zu rso=%zu/%zu/%zu seconds=%.2f\n",
                  r.n_observations[0], r.n_observations[1], r.n_observations[2], r.n_rso[0],
                  r.n_rso[1], r.n_rso[2], r.seconds);
    } else if (*train) {
      const auto r = pipeline::cmd_train(cfg);
      std::printf("train features=%zu epochs=%zu best_epoch=%d train_acc=%.4f val_acc=%.4f "
                  "test_acc=%.4f seconds=%.1f\n",
                  r.feature_count, r.report.epochs.size(), static_cast<int>(r.report.best_epoch), r.train_acc,
                  r.val_acc, r.test_acc, r.report.seconds);
    } else if (*evaluate) {
      const auto r = pipeline::cmd_evaluate(cfg);
      std::printf("evaluate test_acc=%.4f pairs=%zu matches=%zu base_rate=%.5f "
                  "match_rate_above_0.95=%.4f no_match_below_0.2=%.4f score_seconds=%.2f\n",
                  r.test_acc, r.n_pairs, r.n_match_pairs, r.base_rate, r.match_rate_above_095,
                  r.no_match_below_02_fraction, r.scoring_seconds);
    } else if (*associate) {
      const auto r = pipeline::cmd_associate(cfg, observations ? std::optional<std::filesystem::path>(*observations)
                                                               : std::nullopt);
      for (const auto& row : r.rows) {
        std::printf("associate s=%zu candidates=%zu true=%zu rso_recovered=%zu/%zu explored=%.3g\n",
                    row.s, row.n_candidates, row.n_true, row.n_rso_recovered,
                    row.n_rso_recoverable, row.explored_fraction);
      }
      std::printf("associate observations=%zu seconds=%.2f\n", r.n_observations, r.seconds);
    } else if (*saliency) {
      const auto r = pipeline::cmd_saliency(cfg, pairs ? std::optional<std::filesystem::path>(*pairs)
                                                       : std::nullopt);
      std::printf("saliency maps=%zu files=%zu distinct_argmax=%zu\n", r.n_maps, r.files.size(),
                  r.distinct_argmax);
    }
  } catch (const Error& e) {
    return report_error(error_class_name(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
