// Copyright 2026 The Fidelity Eval Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: metrics, selection, study serving, simulation,
// analysis and loss evaluation.

#include <signal.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "fidelity/error.h"
#include "fidelity/format.h"
#include "fidelity/loss.h"
#include "fidelity/manifest.h"
#include "fidelity/metrics.h"
#include "fidelity/raster.h"
#include "fidelity/selection.h"
#include "fidelity/service.h"
#include "fidelity/simulate.h"
#include "fidelity/study.h"
#include "fidelity/synth.h"

namespace {

namespace fs = std::filesystem;
using namespace fidelity;

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

struct SweepRange {
  double t_min = 10.0;
  double t_max = 50.0;
  double step = 1.0;
};

SweepRange ParseSweep(const std::string& text) {
  SweepRange r;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> r.t_min >> c1 >> r.t_max >> c2 >> r.step) || c1 != ':' ||
      c2 != ':' || !in.eof()) {
    throw Error(ErrorCode::kInvalidArgument,
                "--sweep expects t_min:t_max:step, got '" + text + "'");
  }
  return r;
}

raster::CropSpec ParseCrop(const std::string& text) {
  raster::CropSpec crop;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  if (!(in >> crop.origin_x >> c1 >> crop.origin_y >> c2 >> crop.width >>
        c3 >> crop.height) ||
      c1 != ',' || c2 != ',' || c3 != ',') {
    throw Error(ErrorCode::kInvalidArgument,
                "--crop expects x,y,width,height");
  }
  return crop;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
  std::string reference;
  std::string distorted;
  std::string plane = "rgb";
  std::string matrix = "bt709";
  std::string crop;
};

int RunMetrics(const MetricsArgs& args) {
  raster::RasterImage ref = raster::LoadImage(args.reference);
  raster::RasterImage dist = raster::LoadImage(args.distorted);
  if (!args.crop.empty()) {
    const auto crop = ParseCrop(args.crop);
    ref = raster::Crop(ref, crop);
    dist = raster::Crop(dist, crop);
  }
  const auto matrix = args.matrix == "bt601" ? raster::LumaMatrix::kBt601
                                             : raster::LumaMatrix::kBt709;
  const raster::LumaImage ly = raster::ToLuma(ref, matrix);
  const raster::LumaImage dy = raster::ToLuma(dist, matrix);
  const bool luma = args.plane == "luma";
  const auto mse = luma ? metrics::Mse(ly, dy) : metrics::Mse(ref, dist);
  const auto psnr = metrics::PsnrFromMse(mse.value);
  std::cout << "MSE\t" << metrics::FormatValue(mse) << "\n";
  std::cout << "PSNR\t" << metrics::FormatValue(psnr) << "\n";
  const metrics::MsSsimParams params;
  try {
    std::cout << "SSIM\t"
              << metrics::FormatValue(metrics::SsimSingle(ly, dy, params))
              << "\n";
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTooSmall) throw;
    std::cout << "SSIM\tn/a (" << e.what() << ")\n";
  }
  try {
    std::cout << "MS_SSIM_Y\t"
              << metrics::FormatValue(metrics::MsSsimY(ly, dy, params))
              << "\n";
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTooSmall) throw;
    std::cout << "MS_SSIM_Y\tn/a (" << e.what() << ")\n";
  }
  return 0;
}

// ----------------------------------------------------------------- select

struct SelectArgs {
  std::string manifest;
  std::string sweep = "10:50:1";
  std::string labels;
  std::string out = ".";
};

int RunSelect(const SelectArgs& args) {
  const service::StudyManifest manifest = service::LoadManifest(args.manifest);
  const SweepRange range = ParseSweep(args.sweep);
  const auto universe = selection::BuildUniverse(manifest);
  std::optional<selection::PreliminaryLabels> labels;
  if (!args.labels.empty()) {
    labels = selection::LoadPreliminaryLabels(args.labels);
  } else if (manifest.preliminary_labels) {
    labels = selection::LoadPreliminaryLabels(*manifest.preliminary_labels);
  }
  const auto partition =
      selection::FilterByThreshold(universe, manifest.threshold_db);
  const auto points =
      selection::Sweep(labels ? &*labels : nullptr, universe, range.t_min,
                       range.t_max, range.step, manifest.nopref_policy);
  const auto retention = selection::RetentionByRate(partition.kept, universe);

  const fs::path out(args.out);
  fs::create_directories(out);
  WriteText(out / "kept.csv", selection::KeptCsv(partition.kept));
  WriteText(out / "sweep.csv", selection::SweepCsv(points));
  WriteText(out / "retention.csv", selection::RetentionCsv(retention));
  WriteText(out / "selection.json",
            selection::SelectionReportJson(manifest, universe, partition,
                                           points, retention));

  std::cout << "universe " << universe.size() << " triplets, threshold "
            << FormatDouble(manifest.threshold_db) << " dB: kept "
            << partition.kept.size() << ", removed "
            << partition.removed.size() << "\n";
  if (labels) {
    try {
      std::cout << "CR(" << FormatDouble(manifest.threshold_db) << ") = "
                << FormatDouble(selection::ClassificationRate(
                       *labels, universe, manifest.threshold_db,
                       manifest.nopref_policy))
                << " (policy " << service::PolicyName(manifest.nopref_policy)
                << ")\n";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptySet) throw;
      std::cout << "CR undefined: " << e.what() << "\n";
    }
  }
  std::cout << "wrote kept.csv, sweep.csv, retention.csv, selection.json to "
            << out.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------ serve

struct ServeArgs {
  std::string manifest;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string state_dir;
  std::string static_dir;
};

fs::path DefaultStateDir(const std::string& manifest) {
  return fs::path(manifest).parent_path() / "state";
}

int RunServe(const ServeArgs& args) {
  // Block termination signals before any thread starts so only the waiter
  // below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::StudyState state(
      service::LoadManifest(args.manifest),
      args.state_dir.empty() ? DefaultStateDir(args.manifest)
                             : fs::path(args.state_dir));
  service::ServerOptions options;
  options.admin_token = service::AdminTokenFromEnv();
  if (!args.static_dir.empty()) options.static_dir = args.static_dir;
  service::StudyServer server(state, options);
  const int port = server.Bind(args.host, args.port);
  std::cout << "serving study '" << state.manifest().study_id << "' ("
            << state.kept().size() << " test triplets, "
            << state.Votes().size() << " votes recovered) on http://"
            << args.host << ":" << port << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.Stop();
  });
  waiter.detach();
  server.Listen();
  return 0;
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string manifest;
  int subjects = 20;
  int sessions = 1;
  uint64_t seed = 1;
  std::string profile;
  std::string state_dir;
  std::string votes_out;
  int concurrency = 1;
};

int RunSimulate(const SimulateArgs& args) {
  const fs::path state_dir = args.state_dir.empty()
                                 ? DefaultStateDir(args.manifest) / "simulation"
                                 : fs::path(args.state_dir);
  if (fs::exists(state_dir / "votes.jsonl") ||
      fs::exists(state_dir / "subjects.jsonl")) {
    throw Error(ErrorCode::kInvalidArgument,
                "state directory " + state_dir.string() +
                    " already holds a study; pick a fresh --state-dir");
  }
  service::StudyState state(service::LoadManifest(args.manifest), state_dir);
  service::StudyServer server(state, {});
  const int port = server.Bind("127.0.0.1", 0);
  std::thread listener([&] { server.Listen(); });

  service::SimulationOptions options;
  options.subjects = args.subjects;
  options.sessions_per_subject = args.sessions;
  options.seed = args.seed;
  options.concurrency = args.concurrency;
  if (!args.profile.empty()) options.profile = service::LoadProfile(args.profile);

  service::SimulationResult result;
  try {
    result = service::RunSimulation(state, "127.0.0.1", port, options);
  } catch (...) {
    server.Stop();
    listener.join();
    throw;
  }
  server.Stop();
  listener.join();

  const fs::path votes = state_dir / "votes.jsonl";
  if (!args.votes_out.empty()) {
    fs::copy_file(votes, args.votes_out, fs::copy_options::overwrite_existing);
  }
  WriteText(state_dir / "profile.csv", service::ProfileCsv(result.profile));
  std::cout << "simulated " << result.registrations << " sessions, "
            << result.votes << " votes (" << result.test_votes
            << " test); vote log " << votes.string() << "\n"
            << "generator profile:\n"
            << service::ProfileCsv(result.profile);
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string votes;
  std::string by = "bitrate";
  std::string manifest;
  std::string out;
};

int RunAnalyze(const AnalyzeArgs& args) {
  const auto votes = study::LoadVoteLog(args.votes);
  std::vector<selection::Triplet> universe;
  if (!args.manifest.empty()) {
    universe = selection::BuildUniverse(service::LoadManifest(args.manifest));
  } else {
    // Without a manifest the votes themselves describe their triplets.
    std::set<std::string> seen;
    for (const auto& v : votes) {
      if (v.phase != study::Phase::kTest || !seen.insert(v.triplet_id).second) {
        continue;
      }
      if (!v.rate_bpp) {
        throw Error(ErrorCode::kParse,
                    "test vote " + v.vote_id + " carries no rate");
      }
      selection::Triplet t;
      t.id = v.triplet_id;
      t.reference_id = v.reference_id;
      t.rate_bpp = *v.rate_bpp;
      universe.push_back(t);
    }
  }
  study::Grouping grouping;
  if (args.by == "bitrate") {
    grouping = study::Grouping::kByBitrate;
  } else if (args.by == "content") {
    grouping = study::Grouping::kByContent;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "--by must be bitrate or content");
  }
  const std::string csv =
      study::DistributionCsv(study::Distribution(votes, grouping, universe));
  if (args.out.empty()) {
    std::cout << csv;
  } else {
    WriteText(args.out, csv);
  }
  return 0;
}

// ------------------------------------------------------------------- loss

struct LossArgs {
  int equation = 1;
  std::string inputs;
  double lambda = 0.0;
};

int RunLoss(const LossArgs& args) {
  const auto table = metrics::LoadExternalMetrics(args.inputs);
  std::cout << "key,loss\n";
  for (const std::string& key : table.Keys()) {
    loss::DistortionMeasurements m;
    m.mse = table.Lookup(key, "MSE");
    m.ms_ssim_y = table.Lookup(key, "MS_SSIM_Y");
    m.lpips = table.Lookup(key, "LPIPS");
    m.g_a = table.Lookup(key, "G_A");
    m.rate = table.Lookup(key, "RATE");
    double lambda = args.lambda;
    if (auto row_lambda = table.Lookup(key, "LAMBDA")) lambda = *row_lambda;
    if (!(lambda > 0.0)) {
      throw Error(ErrorCode::kMissingMeasurement,
                  key + ": no lambda (pass --lambda or a LAMBDA row)");
    }
    double value = 0.0;
    try {
      value = args.equation == 1
                  ? loss::ConventionalLoss(m, {}, lambda)
                  : loss::PerceptualLoss(m, {}, lambda);
    } catch (const Error& e) {
      throw Error(e.code(), key + ": " + e.what());
    }
    std::cout << key << ',' << FormatDouble(value) << '\n';
  }
  return 0;
}

// ----------------------------------------------------------- make-fixture

struct FixtureArgs {
  std::string out;
  int references = 6;
  std::vector<double> rates = {0.06, 0.25, 0.75};
  uint64_t seed = 7;
  double threshold = 32.0;
  bool labels = false;
};

int RunMakeFixture(const FixtureArgs& args) {
  synth::DeskStudyOptions options;
  options.references = args.references;
  options.rates = args.rates;
  options.seed = args.seed;
  options.threshold_db = args.threshold;
  options.expert_labels = args.labels;
  std::cout << synth::WriteDeskStudy(args.out, options).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fidelity-preserving image codec evaluation toolkit"};
  app.require_subcommand(1);

  MetricsArgs metrics_args;
  auto* metrics_cmd =
      app.add_subcommand("metrics", "Full-reference metrics for one pair");
  metrics_cmd->add_option("reference", metrics_args.reference)->required();
  metrics_cmd->add_option("distorted", metrics_args.distorted)->required();
  metrics_cmd->add_option("--plane", metrics_args.plane, "MSE/PSNR plane")
      ->check(CLI::IsMember({"rgb", "luma"}));
  metrics_cmd->add_option("--luma-matrix", metrics_args.matrix)
      ->check(CLI::IsMember({"bt709", "bt601"}));
  metrics_cmd->add_option("--crop", metrics_args.crop, "x,y,width,height");

  SelectArgs select_args;
  auto* select_cmd =
      app.add_subcommand("select", "Build the triplet universe and sweep");
  select_cmd->add_option("--manifest", select_args.manifest)->required();
  select_cmd->add_option("--sweep", select_args.sweep, "t_min:t_max:step");
  select_cmd->add_option("--labels", select_args.labels,
                         "preliminary expert labels CSV");
  select_cmd->add_option("--out", select_args.out, "output directory");

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the study server");
  serve_cmd->add_option("--manifest", serve_args.manifest)->required();
  serve_cmd->add_option("--port", serve_args.port);
  serve_cmd->add_option("--host", serve_args.host);
  serve_cmd->add_option("--state-dir", serve_args.state_dir);
  serve_cmd->add_option("--static-dir", serve_args.static_dir);

  SimulateArgs simulate_args;
  auto* simulate_cmd =
      app.add_subcommand("simulate", "Run a synthetic end-to-end study");
  simulate_cmd->add_option("--manifest", simulate_args.manifest)->required();
  simulate_cmd->add_option("--subjects", simulate_args.subjects);
  simulate_cmd->add_option("--sessions", simulate_args.sessions,
                           "sessions per synthetic subject");
  simulate_cmd->add_option("--seed", simulate_args.seed);
  simulate_cmd->add_option("--profile", simulate_args.profile,
                           "choice probabilities JSON");
  simulate_cmd->add_option("--state-dir", simulate_args.state_dir);
  simulate_cmd->add_option("--votes-out", simulate_args.votes_out);
  simulate_cmd->add_option("--concurrency", simulate_args.concurrency);

  AnalyzeArgs analyze_args;
  auto* analyze_cmd =
      app.add_subcommand("analyze", "Vote distribution per rate or content");
  analyze_cmd->add_option("--votes", analyze_args.votes)->required();
  analyze_cmd->add_option("--by", analyze_args.by)
      ->check(CLI::IsMember({"bitrate", "content"}));
  analyze_cmd->add_option("--manifest", analyze_args.manifest);
  analyze_cmd->add_option("--out", analyze_args.out);

  LossArgs loss_args;
  auto* loss_cmd = app.add_subcommand("loss", "Evaluate the training losses");
  loss_cmd->add_option("--eq", loss_args.equation)
      ->required()
      ->check(CLI::IsMember({1, 2}));
  loss_cmd->add_option("--inputs", loss_args.inputs, "key,metric,value CSV")
      ->required();
  loss_cmd->add_option("--lambda", loss_args.lambda);

  FixtureArgs fixture_args;
  auto* fixture_cmd = app.add_subcommand(
      "make-fixture", "Write a synthetic desk-scale study to a directory");
  fixture_cmd->add_option("--out", fixture_args.out)->required();
  fixture_cmd->add_option("--refs", fixture_args.references);
  fixture_cmd->add_option("--rates", fixture_args.rates)->delimiter(',');
  fixture_cmd->add_option("--seed", fixture_args.seed);
  fixture_cmd->add_option("--threshold", fixture_args.threshold);
  fixture_cmd->add_flag("--labels", fixture_args.labels,
                        "also write simulated expert labels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*metrics_cmd) return RunMetrics(metrics_args);
    if (*select_cmd) return RunSelect(select_args);
    if (*serve_cmd) return RunServe(serve_args);
    if (*simulate_cmd) return RunSimulate(simulate_args);
    if (*analyze_cmd) return RunAnalyze(analyze_args);
    if (*loss_cmd) return RunLoss(loss_args);
    if (*fixture_cmd) return RunMakeFixture(fixture_args);
  } catch (const fidelity::Error& e) {
    std::cerr << "error (" << fidelity::ErrorCodeName(e.code())
              << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
