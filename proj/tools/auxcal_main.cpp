// Command-line driver: one subcommand per pipeline stage.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "auxcal/error.hpp"
#include "auxcal/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string corpus;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Master seed (overrides the config)");
  cmd->add_option("--corpus", f.corpus, "Input corpus JSONL");
  cmd->add_option("--out", f.out, "Output path");
}

// Flags win over the file, the file over built-in defaults.
auxcal::PipelineConfig resolve(const CommonFlags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw auxcal::ValidationError("config '" + f.config + "' is not valid JSON: " + e.what());
    }
  }
  if (f.seed) j["seed"] = *f.seed;
  if (!f.corpus.empty()) j["paths"]["corpus"] = f.corpus;
  if (!f.out.empty()) j["paths"]["out"] = f.out;
  return auxcal::config_from_json(j);
}

void report_error(std::string_view command, const char* kind, const std::string& message) {
  nlohmann::ordered_json line;
  line["error"] = kind;
  line["command"] = command;
  line["message"] = message;
  std::cerr << line.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Auxiliary confidence calibration toolkit for LLM question answering"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string fixtures;
  std::string command;

  for (const auto& [stage, help] : std::initializer_list<std::pair<auxcal::Stage, const char*>>{
           {auxcal::Stage::split, "Assign train/validation/test splits"},
           {auxcal::Stage::generate, "Query the LLM for answers and verbalized confidence"},
           {auxcal::Stage::grade, "Grade answers against gold answers"},
           {auxcal::Stage::embed, "Embed questions"},
           {auxcal::Stage::cluster, "Cluster question embeddings"},
           {auxcal::Stage::targets, "Assign cluster-accuracy calibration targets"},
           {auxcal::Stage::train, "Train the auxiliary calibrator"},
           {auxcal::Stage::baselines, "Fit Platt scaling on the validation split"},
           {auxcal::Stage::evaluate, "Score every confidence method on the test split"},
           {auxcal::Stage::report, "Write reliability diagrams and the cluster quality table"},
       }) {
    auto* cmd = app.add_subcommand(std::string(auxcal::to_string(stage)), help);
    add_common(cmd, flags);
    cmd->callback([&, stage] {
      command = std::string(auxcal::to_string(stage));
      auxcal::run_stage(stage, resolve(flags));
    });
  }

  auto* run = app.add_subcommand("run", "Run every stage in order; --out names the working directory");
  add_common(run, flags);
  run->callback([&] {
    command = "run";
    const auto cfg = resolve(flags);
    if (cfg.paths.out.empty()) throw auxcal::PreconditionError("run needs --out <workdir>");
    auxcal::run_pipeline(cfg, cfg.paths.out);
  });

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus (--out) and matching replay fixtures");
  add_common(synth, flags);
  synth->add_option("--fixtures", fixtures, "Fixture JSONL to write (default: synth.fixtures, then gateway.fixture_path)");
  synth->callback([&] {
    command = "synth";
    const auto cfg = resolve(flags);
    if (cfg.paths.out.empty()) throw auxcal::PreconditionError("synth needs --out <corpus.jsonl>");
    std::filesystem::path fx = fixtures.empty() ? cfg.synth.fixtures : std::filesystem::path(fixtures);
    if (fx.empty()) fx = cfg.gateway.fixture_path;
    if (fx.empty()) throw auxcal::PreconditionError("synth needs --fixtures, synth.fixtures or gateway.fixture_path");
    auxcal::synthesize_fixture_run(cfg, cfg.paths.out, fx);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const auxcal::Error& e) {
    report_error(command, e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(command, "internal_error", e.what());
    return 1;
  }
  return 0;
}
