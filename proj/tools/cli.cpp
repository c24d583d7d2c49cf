#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "pgr2m/editing/edit.hpp"
#include "pgr2m/error.hpp"
#include "pgr2m/eval/metrics.hpp"
#include "pgr2m/io/checkpoint.hpp"
#include "pgr2m/io/config.hpp"
#include "pgr2m/motion/corpus.hpp"
#include "pgr2m/motion/io.hpp"
#include "pgr2m/pipeline/bundle.hpp"
#include "pgr2m/predictors/train.hpp"
#include "pgr2m/service/service.hpp"
#include "pgr2m/tokenizer/persist.hpp"
#include "pgr2m/tokenizer/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pgr2m::cli {

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

pose::Catalog resolve_catalog(const Config& cfg) {
  return cfg.catalog.empty() ? pose::default_catalog() : pose::load_catalog(cfg.catalog);
}

// JSON-lines log; appends when resuming so one file holds the whole run.
class MetricsLog {
 public:
  MetricsLog(const fs::path& path, bool append) {
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
    }
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot write metrics log " + path.string());
  }
  void operator()(const json& rec) {
    out_ << rec.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

fs::path log_path(const fs::path& out) {
  fs::path p = out;
  p.replace_extension(".metrics.jsonl");
  return p;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string tokenizer;
  std::size_t steps = 0;
  std::int64_t seed = -1;
  bool resume = false;
};

Config training_config(const TrainArgs& a) {
  Config cfg = a.config.empty() ? Config{} : Config::load(a.config);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  // A relative catalog path is relative to the config file.
  if (!cfg.catalog.empty() && fs::path(cfg.catalog).is_relative() && !a.config.empty()) {
    cfg.catalog = (fs::path(a.config).parent_path() / cfg.catalog).lexically_normal().string();
  }
  cfg.validate();
  return cfg;
}

struct Splits {
  motion::MotionDataset data;
  std::vector<const motion::Motion*> train, val;
};

Splits load_splits(const std::string& path) {
  Splits s{motion::load_dataset(path), {}, {}};
  s.train = s.data.split("train");
  s.val = s.data.split("val");
  // Untagged files (hand-made fixtures) train on everything.
  if (s.train.empty() && s.val.empty()) {
    for (const auto& m : s.data.motions) s.train.push_back(&m);
  }
  if (s.train.empty()) throw ValidationError(path + " holds no training motions");
  return s;
}

fs::path sibling_tokenizer(const TrainArgs& a) {
  if (!a.tokenizer.empty()) return a.tokenizer;
  return fs::path(a.out).parent_path() / "tokenizer.ckpt";
}

int train_tokenizer_cmd(const TrainArgs& a, std::ostream& out) {
  const Config cfg = training_config(a);
  const Splits s = load_splits(a.data);
  std::optional<tok::Tokenizer> model;
  tok::TrainOptions opt;
  opt.steps = a.steps;
  if (a.resume && fs::exists(a.out)) {
    const io::Checkpoint ckpt = io::load_checkpoint(a.out);
    io::require_component(ckpt, "tokenizer", a.out);
    require_structural_match(ckpt.config, cfg, "tokenizer checkpoint");
    model.emplace(cfg, pose::Catalog::from_json(ckpt.catalog), cfg.seed);
    io::restore_params(ckpt, model->params());
    opt.resume = io::restore_optimizer(ckpt, model->params());
  } else {
    model.emplace(cfg, resolve_catalog(cfg), cfg.seed);
  }
  MetricsLog log(log_path(a.out), a.resume);
  opt.on_log = [&](const json& rec) { log(rec); };
  const tok::TrainResult r = tok::train_tokenizer(*model, s.train, s.val, opt);
  const json metrics = r.log.empty() ? json::object() : r.log.back();
  tok::save_tokenizer(a.out, *model, r.final_step, metrics, &r.optimizer);
  out << json{{"component", "tokenizer"},
              {"step", r.final_step},
              {"best_step", r.best_step},
              {"best_val_loss_motion", r.best_val_l1},
              {"out", a.out}}
             .dump()
      << '\n';
  return 0;
}

template <class Model>
int train_predictor_cmd(const TrainArgs& a, std::ostream& out, bool refine) {
  const Config cfg = training_config(a);
  const Splits s = load_splits(a.data);
  const tok::Tokenizer tokenizer = tok::load_tokenizer(sibling_tokenizer(a), cfg);
  const std::string component = refine ? "refine" : "base";
  const auto train = pred::make_examples(tokenizer, s.train, refine);
  const auto val = pred::make_examples(tokenizer, s.val, refine);

  Model model(cfg, tokenizer.codes(), cfg.seed);
  pred::PredictorTrainOptions opt;
  opt.steps = a.steps;
  if (a.resume && fs::exists(a.out)) {
    const io::Checkpoint ckpt = io::load_checkpoint(a.out);
    io::require_component(ckpt, component, a.out);
    require_structural_match(ckpt.config, cfg, component + " checkpoint");
    if (ckpt.catalog != tokenizer.catalog().to_json()) {
      throw ValidationError(a.out + ": catalog differs from the tokenizer's");
    }
    io::restore_params(ckpt, model.params());
    opt.resume = io::restore_optimizer(ckpt, model.params());
  }
  MetricsLog log(log_path(a.out), a.resume);
  opt.on_log = [&](const json& rec) { log(rec); };
  pred::PredictorTrainResult r;
  if constexpr (std::is_same_v<Model, pred::BaseTransformer>) {
    r = pred::train_base(model, train, val, opt);
    save_base(a.out, model, tokenizer.catalog(), r.final_step, r.log.empty() ? json::object() : r.log.back(),
              &r.optimizer);
  } else {
    r = pred::train_refine(model, train, val, opt);
    save_refine(a.out, model, tokenizer.catalog(), r.final_step, r.log.empty() ? json::object() : r.log.back(),
                &r.optimizer);
  }
  out << json{{"component", component},
              {"step", r.final_step},
              {"best_step", r.best_step},
              {"best_val_loss", r.best_val_loss},
              {"out", a.out}}
             .dump()
      << '\n';
  return 0;
}

// One row per code that is active somewhere: '#' active, '.' inactive per step.
void print_pose_summary(std::ostream& out, const pose::Catalog& cat, const pose::PoseCodeSequence& z) {
  std::size_t width = 4;
  for (const auto& e : cat.entries()) width = std::max(width, e.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "code" << "  steps 0.." << (z.steps ? z.steps - 1 : 0)
      << '\n';
  for (std::size_t n = 0; n < cat.size(); ++n) {
    std::string row(z.steps, '.');
    std::size_t active = 0;
    for (std::size_t i = 0; i < z.steps; ++i) {
      if (z.at(i, n)) {
        row[i] = '#';
        ++active;
      }
    }
    if (!active) continue;
    out << std::left << std::setw(static_cast<int>(width)) << cat[n].name << "  " << row << "  " << active << '/'
        << z.steps << '\n';
  }
}

std::atomic<service::Service*> g_serving{nullptr};

void stop_serving(int) {
  if (auto* s = g_serving.load()) s->stop();
}

std::pair<std::string, int> parse_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ValidationError("--addr must be host:port, got '" + addr + "'");
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("--addr port is not a number: '" + addr + "'");
  }
  if (port < 0 || port > 65535) throw ValidationError("--addr port out of range: " + std::to_string(port));
  return {addr.substr(0, colon), port};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PGR2M: pose-guided residual-refinement motion tokenizer, generator and editor", "pgr2m"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::string out_path, data, bundle, caption, keywords, mode = "deterministic", motion_path, script_path,
                                                          report_path, split = "test", addr = "127.0.0.1:8742";
  double temperature = -1.0;

  auto* gen_corpus = app.add_subcommand("gen-corpus", "Write a procedural JSON-lines motion corpus");
  gen_corpus->add_option("--seed", seed, "Corpus seed")->required();
  gen_corpus->add_option("--count", count, "Number of motions")->required()->check(CLI::PositiveNumber);
  gen_corpus->add_option("--out", out_path, "Output dataset (.jsonl)")->required();

  TrainArgs ta;
  auto add_train = [&](const char* name, const char* help, bool needs_tokenizer) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--data", ta.data, "Dataset (.jsonl)")->required();
    sc->add_option("--config", ta.config, "Config file; desk defaults when omitted");
    sc->add_option("--out", ta.out, "Checkpoint to write")->required();
    sc->add_option("--steps", ta.steps, "Total optimizer steps (overrides the config)");
    sc->add_option("--seed", ta.seed, "Initialization and sampling seed (overrides the config)");
    sc->add_flag("--resume", ta.resume, "Continue from the checkpoint at --out");
    if (needs_tokenizer) {
      sc->add_option("--tokenizer", ta.tokenizer, "Frozen tokenizer checkpoint; default tokenizer.ckpt beside --out");
    }
    return sc;
  };
  auto* train_tok = add_train("train-tokenizer", "Train the pose-guided residual tokenizer", false);
  auto* train_base = add_train("train-base", "Train the text-to-pose-code transformer", true);
  auto* train_ref = add_train("train-refine", "Train the residual refinement transformer", true);

  auto* generate = app.add_subcommand("generate", "Generate a motion from text");
  generate->add_option("--bundle", bundle, "Bundle directory")->required();
  generate->add_option("--caption", caption, "Caption")->required();
  generate->add_option("--keywords", keywords, "Comma-separated keywords");
  generate->add_option("--mode", mode, "deterministic | stochastic");
  generate->add_option("--temperature", temperature, "Sampling temperature (stochastic mode)");
  generate->add_option("--seed", seed, "Sampling seed");
  generate->add_option("--out", out_path, "Output motion (.json)")->required();

  auto* edit = app.add_subcommand("edit", "Apply a pose-code edit script to a motion");
  edit->add_option("--bundle", bundle, "Bundle directory")->required();
  edit->add_option("--motion", motion_path, "Motion JSON")->required();
  edit->add_option("--script", script_path, "Edit script JSON")->required();
  edit->add_option("--out", out_path, "Edited motion (.json)")->required();
  edit->add_option("--report", report_path, "Edit report; default <out>.report.json");
  edit->add_option("--caption", caption, "Caption for residual re-prediction; default the motion's");
  edit->add_option("--mode", mode, "deterministic | stochastic");
  edit->add_option("--seed", seed, "Sampling seed");

  auto* evaluate = app.add_subcommand("eval", "Evaluate a bundle on a dataset split");
  evaluate->add_option("--bundle", bundle, "Bundle directory")->required();
  evaluate->add_option("--data", data, "Dataset (.jsonl)")->required();
  evaluate->add_option("--split", split, "Split tag; 'all' for every record");
  evaluate->add_option("--seed", seed, "Generation seed");

  auto* serve = app.add_subcommand("serve", "Serve the editor HTTP API");
  serve->add_option("--bundle", bundle, "Bundle directory")->required();
  serve->add_option("--addr", addr, "host:port");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code(ErrorKind::validation);
  }

  try {
    if (gen_corpus->parsed()) {
      const motion::MotionDataset d = motion::generate_corpus(seed, count);
      motion::save_dataset(d, out_path);
      for (const auto& [family, n] : motion::family_histogram(d)) out << family << ' ' << n << '\n';
      out << "total " << d.motions.size() << '\n';
      return 0;
    }
    if (train_tok->parsed()) return train_tokenizer_cmd(ta, out);
    if (train_base->parsed()) return train_predictor_cmd<pred::BaseTransformer>(ta, out, false);
    if (train_ref->parsed()) return train_predictor_cmd<pred::RefineTransformer>(ta, out, true);

    if (generate->parsed()) {
      const Bundle b = load_bundle(bundle);
      pred::SampleOptions opt{pred::parse_sample_mode(mode), temperature > 0 ? temperature : b.config().temperature};
      const Generation g = pgr2m::generate(b, caption, split_list(keywords), opt, seed);
      motion::save_motion(g.motion, out_path);
      out << "generated " << g.pose.steps << " steps, " << g.motion.length() << " frames\n";
      print_pose_summary(out, b.catalog(), g.pose);
      return 0;
    }
    if (edit->parsed()) {
      const Bundle b = load_bundle(bundle);
      const motion::Motion m = motion::load_motion(motion_path);
      const edit::EditScript script = edit::EditScript::from_json(parse_json_file(script_path));
      pred::SampleOptions opt{pred::parse_sample_mode(mode), b.config().temperature};
      const edit::EditReport r = edit::edit_motion(
          b, m, script, caption.empty() ? std::nullopt : std::optional<std::string>(caption), opt, seed);
      motion::save_motion(r.edited, out_path);
      fs::path rp = report_path;
      if (rp.empty()) {
        rp = out_path;
        rp.replace_extension(".report.json");
      }
      write_text(rp, r.to_json().dump() + "\n");
      const json rep = r.to_json();
      out << "edited " << script.ops.size() << " op(s); locality_ratio " << rep.value("locality_ratio", json()).dump()
          << ", code_recovery " << rep.value("code_recovery", json()).dump() << '\n';
      return 0;
    }
    if (evaluate->parsed()) {
      const Bundle b = load_bundle(bundle);
      const motion::MotionDataset d = motion::load_dataset(data);
      std::vector<const motion::Motion*> set;
      if (split == "all") {
        for (const auto& m : d.motions) set.push_back(&m);
      } else {
        set = d.split(split);
      }
      if (set.empty()) throw ValidationError(data + " has no '" + split + "' records");
      out << eval::evaluate_bundle(b, set, seed).dump(2) << '\n';
      return 0;
    }
    if (serve->parsed()) {
      const auto [host, port] = parse_addr(addr);
      auto svc = std::make_unique<service::Service>(std::make_shared<const Bundle>(load_bundle(bundle)));
      const int bound = svc->bind(host, port);
      g_serving = svc.get();
      std::signal(SIGINT, stop_serving);
      std::signal(SIGTERM, stop_serving);
      out << "serving http://" << host << ':' << bound << "/api/info" << std::endl;
      svc->listen_after_bind();
      g_serving = nullptr;
      return 0;
    }
  } catch (const Error& e) {
    err << "pgr2m: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "pgr2m: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace pgr2m::cli
