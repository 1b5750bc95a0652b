// csm: batch front end for analysis, resynthesis, training and scoring.
//
// Exit status: 0 success, 1 usage or configuration error, 2 input/output
// error (unreadable, malformed or mismatched files), 3 numerical failure.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "csm/acoustic_model.hpp"
#include "csm/analysis.hpp"
#include "csm/config.hpp"
#include "csm/container.hpp"
#include "csm/metrics.hpp"
#include "csm/synthesis.hpp"
#include "csm/toy_corpus.hpp"
#include "csm/wav.hpp"

namespace fs = std::filesystem;
using namespace csm;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string report;
  int jobs = 1;
  std::string dump_config;
};

RunConfig effective_config(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : RunConfig::load(o.config_path);
  if (o.seed) c.seed = *o.seed;
  c.train.seed = c.seed;
  if (o.dump_config == "-")
    std::cout << c.dump() << std::flush;
  else if (!o.dump_config.empty())
    write_file_atomic(o.dump_config, c.dump());
  return c;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// File plans and parallel execution

struct Job {
  std::string name;  // file stem
  fs::path in, out;
};

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// A single file maps onto `out` (or into it, when it is a directory); a
// directory maps every matching file into the output directory.
std::vector<Job> plan(const fs::path& in, const fs::path& out, const std::string& in_ext, const std::string& out_ext) {
  std::vector<Job> jobs;
  if (fs::is_directory(in)) {
    const auto files = files_with_extension(in, in_ext);
    if (files.empty()) throw IoError(in.string() + ": no " + in_ext + " files");
    fs::create_directories(out);
    for (const auto& f : files) jobs.push_back({f.stem().string(), f, out / (f.stem().string() + out_ext)});
  } else {
    if (!fs::exists(in)) throw IoError(in.string() + ": no such file");
    const fs::path target = fs::is_directory(out) ? out / (in.stem().string() + out_ext) : out;
    jobs.push_back({in.stem().string(), in, target});
  }
  return jobs;
}

// Runs f(i) for i < n on up to `jobs` threads. Errors are collected per
// item and the one with the lowest index is rethrown, so failures report
// the same file regardless of scheduling.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, jobs));
  if (n_threads == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, n); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Tab-separated table with a header row. With `append`, rows go after any
// existing content and the header is written only for a new file.
void write_table(const fs::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows, bool append) {
  auto line = [](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "\t" : "") + cells[i];
    return s + "\n";
  };
  std::string text;
  if (append && fs::exists(path)) {
    const auto old = read_file_bytes(path);
    text.assign(old.begin(), old.end());
  }
  if (text.empty()) text = line(header);
  for (const auto& r : rows) text += line(r);
  if (path.empty())
    std::cout << text;
  else
    write_file_atomic(path, text);
}

// ---------------------------------------------------------------------------
// Verbs

const std::vector<std::string> kMetricHeader{"utterance", "llr", "fwsnrseg_db", "lsd_db", "frames"};

std::vector<std::string> metric_row(const std::string& name, const MetricReport& r) {
  return {name, num(r.llr), num(r.fwsnrseg), num(r.lsd), std::to_string(r.n_frames)};
}

std::vector<std::string> mean_row(const std::vector<MetricReport>& rs) {
  double a = 0.0, b = 0.0, c = 0.0;
  std::size_t frames = 0;
  for (const auto& r : rs) {
    a += r.llr;
    b += r.fwsnrseg;
    c += r.lsd;
    frames += r.n_frames;
  }
  const auto n = static_cast<double>(rs.size());
  return {"mean", num(a / n), num(b / n), num(c / n), std::to_string(frames)};
}

int cmd_analyze(const Options& o, const fs::path& in, const fs::path& out) {
  const RunConfig cfg = effective_config(o);
  const auto jobs = plan(in, out, ".wav", ".csmt");
  parallel_for(jobs.size(), o.jobs, [&](std::size_t i) {
    const auto track = analyze(read_wav(jobs[i].in), cfg.analysis);
    write_container(jobs[i].out, container_from_track(track));
  });
  return kOk;
}

int cmd_refine(const Options& o, const fs::path& wav, const fs::path& in, const fs::path& out) {
  const RunConfig cfg = effective_config(o);
  const SpeechBuffer wave = read_wav(wav);
  ParameterTrack track = track_from_container(read_container(in));
  if (track.sample_rate != wave.sample_rate)
    throw PreconditionError(in.string() + ": sample rate " + std::to_string(track.sample_rate) + " differs from " +
                            wav.string());
  const auto result = refine_contf0(wave, track.f0, cfg.analysis.refine);
  // Everything downstream of f0 is re-estimated on the refined track.
  track.f0 = result.track;
  track.mvf = estimate_mvf(wave, track.f0, cfg.analysis.mvf);
  track.envelope = extract_envelope(wave, track.f0, cfg.analysis.envelope);
  if (track.has_noise_env())
    track.noise_env = noise_time_envelope(wave, track.f0.values, track.mvf,
                                          hop_samples_for(track.frame_hop, wave.sample_rate), cfg.analysis.noise);
  write_container(out, container_from_track(track));
  if (!o.report.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < result.max_change.size(); ++k)
      rows.push_back({std::to_string(k + 1), num(result.max_change[k])});
    write_table(o.report, {"iteration", "max_change_hz"}, rows, false);
  }
  return kOk;
}

int cmd_synth(const Options& o, const fs::path& in, const fs::path& out) {
  const RunConfig cfg = effective_config(o);
  const auto jobs = plan(in, out, ".csmt", ".wav");
  parallel_for(jobs.size(), o.jobs, [&](std::size_t i) {
    const auto track = track_from_container(read_container(jobs[i].in));
    write_wav(jobs[i].out, synthesize(track, cfg.seed));
  });
  return kOk;
}

int cmd_copy_synth(const Options& o, const fs::path& in, const fs::path& out) {
  const RunConfig cfg = effective_config(o);
  const bool batch = fs::is_directory(in);
  const auto jobs = plan(in, out, ".wav", ".wav");
  std::vector<MetricReport> reports(jobs.size());
  parallel_for(jobs.size(), o.jobs, [&](std::size_t i) {
    const SpeechBuffer wave = read_wav(jobs[i].in);
    const SpeechBuffer synth = quantize16(synthesize(analyze(wave, cfg.analysis), cfg.seed));
    write_wav(jobs[i].out, synth);
    reports[i] = evaluate(wave, synth, cfg.metrics);
  });
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < jobs.size(); ++i) rows.push_back(metric_row(jobs[i].name, reports[i]));
  if (batch) rows.push_back(mean_row(reports));
  write_table(o.report, kMetricHeader, rows, !o.report.empty());
  return kOk;
}

struct Corpus {
  std::vector<std::string> names;
  std::vector<TrainingPair> pairs;
};

// Pairs feature and target containers by file name; every problem is
// collected so one run reports all offending utterances.
Corpus load_pairs(const fs::path& features_dir, const fs::path& targets_dir) {
  const auto feats = files_with_extension(features_dir, ".csmt");
  if (feats.empty()) throw IoError(features_dir.string() + ": no .csmt files");
  std::vector<std::string> problems;
  for (const auto& t : files_with_extension(targets_dir, ".csmt"))
    if (!fs::exists(features_dir / t.filename())) problems.push_back(t.stem().string() + ": no feature file");
  Corpus c;
  for (const auto& f : feats) {
    const std::string name = f.stem().string();
    const fs::path target = targets_dir / f.filename();
    if (!fs::exists(target)) {
      problems.push_back(name + ": no target file");
      continue;
    }
    Sequence x = features_from_container(read_container(f));
    Sequence y = track_to_targets(track_from_container(read_container(target)));
    if (x.rows() != y.rows()) {
      problems.push_back(name + ": " + std::to_string(x.rows()) + " feature frames vs " + std::to_string(y.rows()) +
                         " target frames");
      continue;
    }
    if (!c.pairs.empty() && (x.cols() != c.pairs.front().x.cols() || y.cols() != c.pairs.front().y.cols())) {
      problems.push_back(name + ": dimensions differ from " + c.names.front());
      continue;
    }
    c.names.push_back(name);
    c.pairs.push_back({std::move(x), std::move(y)});
  }
  if (!problems.empty()) {
    std::sort(problems.begin(), problems.end());
    std::string msg = "unpaired or mismatched utterances:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw PreconditionError(msg);
  }
  return c;
}

int cmd_train(const Options& o, const fs::path& features_dir, const fs::path& targets_dir, const fs::path& model_out,
              std::size_t heldout) {
  const RunConfig cfg = effective_config(o);
  Corpus corpus = load_pairs(features_dir, targets_dir);
  if (heldout >= corpus.pairs.size()) throw ConfigError("--heldout must leave at least one training utterance");
  std::vector<TrainingPair> held(corpus.pairs.end() - static_cast<std::ptrdiff_t>(heldout), corpus.pairs.end());
  corpus.pairs.resize(corpus.pairs.size() - heldout);
  auto fit = train_acoustic_model(corpus.pairs, cfg.network, cfg.train, cfg.init_range, cfg.standardize_targets, held);
  save_checkpoint(model_out, fit.model);
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : fit.log)
    rows.push_back({std::to_string(e.epoch), num(e.learning_rate), num(e.momentum), num(e.train_loss), num(e.heldout_loss)});
  const fs::path log_path = o.report.empty() ? fs::path(model_out.string() + ".loss.tsv") : fs::path(o.report);
  write_table(log_path, {"epoch", "learning_rate", "momentum", "train_loss", "heldout_loss"}, rows, false);
  return kOk;
}

int cmd_predict(const Options& o, const fs::path& model, const fs::path& features_dir, const fs::path& out_dir) {
  effective_config(o);
  const AcousticModel am = load_checkpoint(model);
  const auto jobs = plan(features_dir, out_dir, ".csmt", ".csmt");
  parallel_for(jobs.size(), o.jobs, [&](std::size_t i) {
    const auto c = read_container(jobs[i].in);
    write_container(jobs[i].out,
                    container_from_track(predict_track(am, features_from_container(c), c.frame_hop, c.sample_rate)));
  });
  return kOk;
}

int cmd_eval(const Options& o, const fs::path& natural_dir, const fs::path& synth_dir) {
  const RunConfig cfg = effective_config(o);
  const auto natural = files_with_extension(natural_dir, ".wav");
  if (natural.empty()) throw IoError(natural_dir.string() + ": no .wav files");
  if (!fs::is_directory(synth_dir)) throw IoError(synth_dir.string() + ": not a directory");
  std::string missing;
  for (const auto& f : natural)
    if (!fs::exists(synth_dir / f.filename())) missing += "\n  " + (synth_dir / f.filename()).string();
  if (!missing.empty()) throw IoError("missing synthesized counterpart:" + missing);
  std::vector<MetricReport> reports(natural.size());
  parallel_for(natural.size(), o.jobs, [&](std::size_t i) {
    const auto a = read_wav(natural[i]);
    const auto b = read_wav(synth_dir / natural[i].filename());
    if (a.sample_rate != b.sample_rate) throw PreconditionError(natural[i].filename().string() + ": sample rates differ");
    reports[i] = evaluate(a, b, cfg.metrics);
  });
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < natural.size(); ++i) rows.push_back(metric_row(natural[i].stem().string(), reports[i]));
  rows.push_back(mean_row(reports));
  write_table(o.report, kMetricHeader, rows, false);
  return kOk;
}

int cmd_toy_corpus(const Options& o, const fs::path& out_dir) {
  const RunConfig cfg = effective_config(o);
  toy::CorpusConfig tc;
  tc.seed = cfg.seed;
  for (const char* sub : {"wav", "features", "targets"}) fs::create_directories(out_dir / sub);
  parallel_for(tc.n_utterances, o.jobs, [&](std::size_t i) {
    const auto u = toy::render_utterance(i, tc);
    write_wav(out_dir / "wav" / (u.name + ".wav"), u.audio);
    write_container(out_dir / "features" / (u.name + ".csmt"),
                    container_from_features(u.features, u.track.frame_hop, u.track.sample_rate));
    write_container(out_dir / "targets" / (u.name + ".csmt"), container_from_track(u.track));
  });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous sinusoidal vocoder toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "key = value run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "random seed (default 42)");
  app.add_option("--report", o.report, "report or loss-log path (tab-separated)");
  app.add_option("--jobs", o.jobs, "worker threads for batch commands")->check(CLI::Range(1, 256));
  app.add_option("--dump-config", o.dump_config, "write the effective configuration here (- for stdout)");

  std::function<int()> run;
  std::string a, b, c;
  std::size_t heldout = 0;

  auto* analyze_cmd = app.add_subcommand("analyze", "WAV (or directory) to parameter track container(s)");
  analyze_cmd->add_option("input", a, "WAV file or directory")->required();
  analyze_cmd->add_option("output", b, "container file or directory")->required();
  analyze_cmd->callback([&] { run = [&] { return cmd_analyze(o, a, b); }; });

  auto* refine_cmd = app.add_subcommand("refine-f0", "refine the f0 channel of a container against its WAV");
  refine_cmd->add_option("wav", a, "source WAV")->required();
  refine_cmd->add_option("input", b, "parameter track container")->required();
  refine_cmd->add_option("output", c, "refined container")->required();
  refine_cmd->callback([&] { run = [&] { return cmd_refine(o, a, b, c); }; });

  auto* synth_cmd = app.add_subcommand("synth", "container (or directory) to WAV(s)");
  synth_cmd->add_option("input", a, "container file or directory")->required();
  synth_cmd->add_option("output", b, "WAV file or directory")->required();
  synth_cmd->callback([&] { run = [&] { return cmd_synth(o, a, b); }; });

  auto* copy_cmd = app.add_subcommand("copy-synth", "analyze, resynthesize and score against the input");
  copy_cmd->add_option("input", a, "WAV file or directory")->required();
  copy_cmd->add_option("output", b, "WAV file or directory")->required();
  copy_cmd->callback([&] { run = [&] { return cmd_copy_synth(o, a, b); }; });

  auto* train_cmd = app.add_subcommand("train", "train the acoustic model on paired feature/target containers");
  train_cmd->add_option("features", a, "directory of feature containers")->required();
  train_cmd->add_option("targets", b, "directory of parameter track containers")->required();
  train_cmd->add_option("model", c, "checkpoint output path")->required();
  train_cmd->add_option("--heldout", heldout, "score the last N utterances (by name) instead of training on them");
  train_cmd->callback([&] { run = [&] { return cmd_train(o, a, b, c, heldout); }; });

  auto* predict_cmd = app.add_subcommand("predict", "predict parameter tracks from feature containers");
  predict_cmd->add_option("model", a, "checkpoint")->required();
  predict_cmd->add_option("features", b, "feature container or directory")->required();
  predict_cmd->add_option("output", c, "output container or directory")->required();
  predict_cmd->callback([&] { run = [&] { return cmd_predict(o, a, b, c); }; });

  auto* eval_cmd = app.add_subcommand("eval", "score synthesized WAVs against natural ones");
  eval_cmd->add_option("natural", a, "directory of reference WAVs")->required();
  eval_cmd->add_option("synth", b, "directory of WAVs with the same names")->required();
  eval_cmd->callback([&] { run = [&] { return cmd_eval(o, a, b); }; });

  auto* toy_cmd = app.add_subcommand("toy-corpus", "write the synthetic 20-utterance training corpus");
  toy_cmd->add_option("output", a, "directory; receives wav/, features/ and targets/")->required();
  toy_cmd->callback([&] { run = [&] { return cmd_toy_corpus(o, a); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    return run();
  } catch (const ConfigError& e) {
    std::cerr << "csm: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "csm: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "csm: " << e.what() << "\n";
    return kIo;
  }
}
