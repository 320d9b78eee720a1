// fovb: synthetic data, training, evaluation and verification commands.
//
// Exit codes: 0 success, 2 usage or configuration, 3 numerical failure,
// 4 data or checkpoint integrity.

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fovb/checkpoint.h"
#include "fovb/config.h"
#include "fovb/io.h"
#include "fovb/metrics.h"
#include "fovb/model.h"
#include "fovb/synth.h"
#include "fovb/train.h"
#include "fovb/verify.h"

namespace {

using namespace fovb;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIntegrity = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream file(path);
  if (!file) throw WriteError("cannot open " + path + " for writing");
  file << text;
  if (!file) throw WriteError("failed writing " + path);
}

std::string CategoryCounts(const std::vector<SyntheticSample>& samples) {
  std::array<std::size_t, 4> counts{};
  for (const SyntheticSample& s : samples) ++counts[static_cast<std::size_t>(s.category)];
  std::ostringstream out;
  for (std::size_t i = 0; i < 4; ++i) {
    out << (i ? " " : "") << CategoryName(static_cast<Category>(i)) << "=" << counts[i];
  }
  return out.str();
}

struct SynthArgs {
  std::string out;
  long long n = 0;
  std::uint64_t seed = 0;
};

int RunSynth(const SynthArgs& a) {
  if (a.n < 1) throw UsageError("--n must be at least 1");
  const auto samples = SynthGenerate(static_cast<std::size_t>(a.n), a.seed);
  WriteDataset(a.out, samples);
  std::cout << "wrote " << samples.size() << " samples to " << a.out << "\n"
            << CategoryCounts(samples) << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string eval_data;
  std::string out;
  std::string resume;
};

int RunTrain(const TrainArgs& a) {
  const RunConfig config = a.config.empty() ? RunConfig{} : LoadRunConfig(a.config);
  if (a.config.empty()) config.Validate();

  std::filesystem::path dir(a.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw WriteError("cannot create output directory " + a.out);

  std::unique_ptr<FovbModel> model;
  std::uint64_t seed = config.seed;
  std::optional<TrainingSnapshot> resumed;
  if (!a.resume.empty()) {
    LoadedCheckpoint loaded = LoadCheckpoint(a.resume);
    if (!(loaded.snapshot.model == config.model)) {
      throw ConfigError("model section of the config does not match the checkpoint");
    }
    model = std::move(loaded.model);
    seed = loaded.snapshot.seed;
    resumed = std::move(loaded.snapshot);
  } else {
    model = std::make_unique<FovbModel>(config.model, seed);
  }

  const PreparedDataset train =
      Prepare(a.data.empty() ? SynthGenerate(config.data.n_train, TrainDataSeed(seed),
                                             config.data.category_mix)
                             : ReadDataset(a.data));
  const PreparedDataset eval =
      Prepare(a.eval_data.empty() ? SynthGenerate(config.data.n_eval, EvalDataSeed(seed),
                                                  config.data.category_mix)
                                  : ReadDataset(a.eval_data));

  Trainer trainer(*model, train, config.train, seed);
  if (resumed) {
    if (resumed->step >= config.train.steps) {
      throw ConfigError("checkpoint is already at step " + std::to_string(resumed->step) +
                        " of " + std::to_string(config.train.steps));
    }
    AdamWState state = resumed->optimizer.m.empty()
                           ? AdamWState::For(model->TrainableParameters())
                           : resumed->optimizer;
    trainer.Resume(resumed->step, std::move(state));
    std::cerr << "resuming at step " << resumed->step << "\n";
  }

  const std::string csv_path = (dir / "loss.csv").string();
  const bool append = resumed && std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw WriteError("cannot open " + csv_path + " for writing");
  if (!append) csv << LossCsvHeader() << "\n";
  WriteText((dir / "config.json").string(), RunConfigToJson(config) + "\n");

  const TrainOutcome outcome =
      RunTraining(trainer, *model, config.train, &eval, [&](const LossRecord& r) {
        csv << LossCsvRow(r) << "\n";
        csv.flush();
        if (r.step % 100 == 0 || r.step == config.train.steps) {
          std::cerr << "step " << r.step << " loss " << r.loss << "\n";
        }
      });
  for (const auto& [step, report] : outcome.evals) {
    if (step != trainer.step()) {
      std::cerr << "eval step " << step << " auc " << report.auc << " ap " << report.ap
                << " acc " << report.acc << "\n";
    }
  }

  SaveCheckpoint((dir / "checkpoint.fovb").string(), *model, seed, trainer.step(),
                 &trainer.optimizer());
  const MetricsReport& final_report = outcome.evals.back().second;
  WriteText((dir / "metrics.json").string(), final_report.ToJson() + "\n");
  std::cout << "step=" << trainer.step() << "\n" << final_report.ToKeyValue();
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
};

int RunEval(const EvalArgs& a) {
  const LoadedCheckpoint loaded = LoadCheckpoint(a.ckpt);
  const PreparedDataset data = Prepare(ReadDataset(a.data), loaded.model->config().image_size);
  const std::string json = Evaluate(*loaded.model, data).ToJson();
  if (!a.out.empty()) WriteText(a.out, json + "\n");
  std::cout << json << "\n";
  return kExitOk;
}

struct GradArgs {
  std::uint64_t seed = 0;
  std::string scope = "ops";
};

int RunGrad(const GradArgs& a) {
  const GradCheckReport report = RunGradCheck(a.scope, a.seed);
  std::cout << report.Format();
  return report.passed() ? kExitOk : kExitNumerical;
}

int RunDiv(const DivCheckOptions& options) {
  const DivCheckReport report = RunDivCheck(options);
  std::cout << report.Format();
  return report.passed() ? kExitOk : kExitNumerical;
}

struct DumpArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string path = "prior";
};

int RunDump(const DumpArgs& a) {
  const LoadedCheckpoint loaded = LoadCheckpoint(a.ckpt);
  const PreparedDataset data = Prepare(ReadDataset(a.data), loaded.model->config().image_size);
  const bool posterior = a.path == "posterior";
  const std::size_t dim = loaded.model->config().dim;

  std::ostringstream out;
  out << std::setprecision(17) << "category";
  for (const char* code : {"c", "s_a", "s_v"}) {
    for (const char* part : {"mu", "logvar"}) {
      for (std::size_t k = 0; k < dim; ++k) out << ',' << code << '_' << part << '_' << k;
    }
  }
  out << '\n';
  for (std::size_t begin = 0; begin < data.size(); begin += 100) {
    const std::size_t end = std::min(data.size(), begin + 100);
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    const FactorizedLatents z = loaded.model->Latents(data.MakeBatch(idx), posterior);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out << CategoryName(data.categories[idx[r]]);
      for (const DiagonalGaussian* g : {&z.c_dist, &z.s_a_dist, &z.s_v_dist}) {
        for (const Tensor* t : {&g->mean, &g->log_var}) {
          for (std::size_t k = 0; k < dim; ++k) out << ',' << t->at(r * dim + k);
        }
      }
      out << '\n';
    }
  }
  WriteText(a.out, out.str());
  std::cout << "wrote " << data.size() << " rows to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FoVB audio-visual forgery detection toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "Output dataset path")->required();
  synth_cmd->add_option("--n", synth.n, "Number of samples")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train adapters, VBFE and heads");
  train_cmd->add_option("--config", train.config, "JSON run configuration");
  train_cmd->add_option("--data", train.data,
                        "Training dataset (generated from the config when omitted)");
  train_cmd->add_option("--eval-data", train.eval_data,
                        "Evaluation dataset (generated from the config when omitted)");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset path")->required();
  eval_cmd->add_option("--out", eval.out, "Also write the metrics JSON here");

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_option("--seed", grad.seed, "Seed for inputs and coordinates");
  grad_cmd->add_option("--scope", grad.scope, "ops, glfa, vbfe or full")
      ->check(CLI::IsMember({"ops", "glfa", "vbfe", "full"}));

  DivCheckOptions div;
  auto* div_cmd = app.add_subcommand("divcheck", "Divergence estimator oracles");
  div_cmd->add_option("--samples", div.samples, "Monte-Carlo samples for JS checks");
  div_cmd->add_option("--seed", div.seed, "Seed");
  div_cmd->add_flag("--search-c1", div.search_c1,
                    "Random search for violations of the mixture-prior KL chain");

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-latents", "Write per-sample latent parameters");
  dump_cmd->add_option("--ckpt", dump.ckpt, "Checkpoint path")->required();
  dump_cmd->add_option("--data", dump.data, "Dataset path")->required();
  dump_cmd->add_option("--out", dump.out, "Output CSV path")->required();
  dump_cmd->add_option("--path", dump.path, "prior (default) or posterior encoders")
      ->check(CLI::IsMember({"prior", "posterior"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth_cmd) return RunSynth(synth);
    if (*train_cmd) return RunTrain(train);
    if (*eval_cmd) return RunEval(eval);
    if (*grad_cmd) return RunGrad(grad);
    if (*div_cmd) return RunDiv(div);
    if (*dump_cmd) return RunDump(dump);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const WriteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
