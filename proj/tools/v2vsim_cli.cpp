// v2vsim command-line driver: train, eval, render, protocol-dump, protocol-sample, config.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "v2vsim/v2vsim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace v2v;

namespace {

// Shared by the commands that need a resolved RunConfig.
struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("-c,--config", a.file, "JSON config file");
  cmd->add_option("--set", a.sets, "override, e.g. --set highway.num_cars=4 (value parsed as JSON)");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--threads", a.threads, "worker threads (0 = all cores)");
}

// "a.b.c=v" -> {"a":{"b":{"c":v}}}; v is JSON when it parses, else a string.
json override_patch(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
  const std::string path = s.substr(0, eq), raw = s.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) value = json{{*it, value}};
  return value;
}

// Defaults < config file < --set < dedicated flags.
RunConfig resolve(const ConfigArgs& a) {
  RunConfig c;
  if (!a.file.empty()) c = load_run_config(a.file);
  for (const auto& s : a.sets) apply_json(override_patch(s), c);
  if (!a.mode.empty()) c.mode = parse_mode(a.mode);
  if (a.seed) c.seed = *a.seed;
  if (a.threads) c.train.num_threads = *a.threads;
  if (!a.out.empty()) c.output_dir = a.out;
  validate(c);
  return c;
}

fs::path output_dir(const RunConfig& c, const std::string& fallback_name) {
  if (!c.output_dir.empty()) return c.output_dir;
  const char* root = std::getenv("V2VSIM_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / fallback_name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw FileError("cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw FileError("write failed: " + p.string());
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw FileError("cannot create " + p.string() + ": " + ec.message());
}

std::string iteration_name(int it) {
  std::ostringstream os;
  os << "iter_" << std::setw(5) << std::setfill('0') << it << ".ckpt";
  return os.str();
}

int cmd_train(const ConfigArgs& a) {
  const RunConfig c = resolve(a);
  const fs::path dir = output_dir(c, "train-" + std::string(to_string(c.mode)) + "-s" + std::to_string(c.seed));
  make_dir(dir / "checkpoints");
  const json resolved = to_json(c);
  write_text(dir / "config.resolved.json", resolved.dump(2) + "\n");
  std::cout << "resolved config:\n" << resolved.dump(2) << "\n";
  const Architecture arch = Architecture::for_mode(c.mode, c.highway.num_cars);
  std::cout << "policy input width " << kObservationWidth + (arch.uses_messages() ? kCodeWidth : 0) << " ("
            << to_string(c.mode) << ")\n";

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw FileError("cannot open metrics log in " + dir.string());
  const auto hook = [&](const IterationMetrics& m, const TrainState& st) {
    metrics << to_json(m).dump() << "\n" << std::flush;
    std::cout << "iter " << m.iteration << "  episodes " << m.episodes_done << "  return " << std::fixed
              << std::setprecision(2) << m.mean_return << "  flat " << std::setprecision(4) << m.flat_success
              << "  kl " << m.approx_kl << "  clip " << m.clip_fraction << "\n"
              << std::defaultfloat;
    if (c.train.checkpoint_every > 0 && st.iteration % c.train.checkpoint_every == 0)
      save_checkpoint(dir / "checkpoints" / iteration_name(st.iteration), to_checkpoint(st));
  };
  const TrainState st = train(c.train, c.highway, c.mode, c.seed, hook);
  save_checkpoint(dir / "checkpoints" / "final.ckpt", to_checkpoint(st));
  std::cout << "wrote " << (dir / "checkpoints" / "final.ckpt").string() << "\n";
  return 0;
}

struct EvalArgs {
  ConfigArgs cfg;
  std::string checkpoint;
  bool random = false;
  std::string condition;
  std::vector<std::uint64_t> seeds;
  std::optional<int> episodes;
  std::vector<std::string> comm_ranges;
  std::string label;
};

std::optional<double> parse_range(const std::string& s) {
  if (s == "unlimited" || s == "inf") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !(v >= 0.0)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("--comm-range expects a non-negative number or 'unlimited', got '" + s + "'");
  }
}

int cmd_eval(EvalArgs& a) {
  RunConfig c = resolve(a.cfg);
  if (!a.condition.empty()) c.eval.condition = parse_condition(a.condition);
  if (!a.seeds.empty()) c.eval.seeds = a.seeds;
  if (a.episodes) c.eval.episodes = *a.episodes;
  if (!a.checkpoint.empty()) c.checkpoint = a.checkpoint;
  validate(c);
  if (c.checkpoint.empty() && !a.random) throw ConfigError("eval needs --checkpoint or --random");

  std::optional<Checkpoint> ck;
  if (!a.random) ck = load_checkpoint(c.checkpoint);
  const Controller ctl = ck ? Controller{&ck->agent, {}} : Controller{nullptr, uniform_random_policy()};
  std::string label = a.label;
  if (label.empty()) label = ck ? std::string(to_string(ck->agent.params.arch.mode)) : "random";

  std::vector<std::optional<double>> ranges;
  for (const auto& s : a.comm_ranges) ranges.push_back(parse_range(s));
  if (ranges.empty()) ranges.push_back(c.highway.comm_range);

  const fs::path dir = output_dir(c, "eval-" + label);
  make_dir(dir);
  json resolved = to_json(c);
  resolved["random_policy"] = a.random;
  write_text(dir / "config.resolved.json", resolved.dump(2) + "\n");

  json all = json::array();
  std::string md;
  for (const auto& r : ranges) {
    HighwayConfig env = c.highway;
    env.comm_range = r;
    const EvalReport rep = evaluate(ctl, env, c.eval.condition, c.eval.episodes, c.eval.seeds, c.train.num_threads);
    const auto rows = report_rows(label, rep);
    const std::string range_name = r ? format_fixed(*r, 1) : "unlimited";
    const std::string table = report_table(rows);
    const std::string heading = "comm_range " + range_name + "\n";
    std::cout << heading << table << "\n";
    md += heading + "\n" + table + "\n";
    json j = report_json(rows);
    j["comm_range"] = r ? json(*r) : json(nullptr);
    all.push_back(std::move(j));
  }
  write_text(dir / "report.json", (all.size() == 1 ? all[0] : all).dump(2) + "\n");
  write_text(dir / "report.md", md);
  return 0;
}

struct RenderArgs {
  ConfigArgs cfg;
  std::string policy;
  std::uint64_t episode_seed = 0;
  bool greedy = true;
};

int cmd_render(RenderArgs& a) {
  RunConfig c = resolve(a.cfg);
  std::optional<Checkpoint> ck;
  if (a.policy != "random") ck = load_checkpoint(a.policy);
  if (ck && ck->agent.params.arch.uses_messages() && ck->agent.params.arch.max_senders != c.highway.num_cars - 1)
    throw LoadError("checkpoint expects " + std::to_string(ck->agent.params.arch.max_senders + 1) + " cars, config has " +
                    std::to_string(c.highway.num_cars));
  const Controller ctl = ck ? Controller{&ck->agent, {}} : Controller{nullptr, uniform_random_policy()};
  const fs::path dir = output_dir(c, "render-s" + std::to_string(a.episode_seed));
  make_dir(dir);

  int frame = 0;
  std::vector<CarStatus> last;
  json events = json::array();
  const StepHook hook = [&](const WorldState& w) {
    std::ostringstream name;
    name << "frame_" << std::setw(5) << std::setfill('0') << frame << ".png";
    write_png(dir / name.str(), render_frame(w));
    for (const CarState& car : w.cars) {
      if (!last.empty() && last[car.car_id] == CarStatus::active && car.status != CarStatus::active)
        events.push_back({{"step", w.step_count}, {"car_id", car.car_id}, {"status", std::string(to_string(car.status))}});
    }
    last.clear();
    for (const CarState& car : w.cars) last.push_back(car.status);
    ++frame;
  };
  EpisodeOptions opt;
  opt.selection = a.greedy ? ActionSelection::greedy : ActionSelection::sample;
  const EpisodeResult res = run_episode(ctl, c.highway, a.episode_seed, opt, hook);
  json summary = {{"episode_seed", a.episode_seed},
                  {"policy", a.policy},
                  {"fog", res.fog},
                  {"frames", frame},
                  {"steps", frame - 1},
                  {"successes", res.successes()},
                  {"events", events},
                  {"config", to_json(c)}};
  write_text(dir / "events.json", summary.dump(2) + "\n");
  std::cout << "wrote " << frame << " frames to " << dir.string() << "\n";
  return 0;
}

int cmd_protocol_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) {
    std::cerr << "error: " << path << " is empty (expected records of " << wire::kRecordSize << " bytes)\n";
    return 1;
  }
  json out = json::array();
  int errors = 0;
  for (std::size_t off = 0; off < bytes.size(); off += wire::kRecordSize) {
    const std::size_t n = std::min(wire::kRecordSize, bytes.size() - off);
    const std::span<const std::uint8_t> rec(bytes.data() + off, n);
    try {
      const auto v = wire::decode_wire(rec).to_array();
      json ordered = json::array();
      for (std::size_t i = 0; i < v.size(); ++i) ordered.push_back({{"label", message_labels()[i]}, {"value", v[i]}});
      out.push_back({{"offset", off}, {"fields", ordered}});
    } catch (const wire::DecodeError& e) {
      ++errors;
      std::cerr << "record at offset " << off << ": " << e.what() << "\n";
      out.push_back({{"offset", off}, {"error", e.what()}});
    }
  }
  std::cout << out.dump(2) << "\n";
  return errors ? 1 : 0;
}

int cmd_protocol_sample(const std::string& path, std::uint64_t seed, int count) {
  HighwayConfig cfg;
  WorldState w = reset_world(cfg, seed);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path + " for writing");
  int written = 0;
  while (written < count) {
    if (w.done() || w.inbox.empty()) w = reset_world(cfg, seed + static_cast<std::uint64_t>(written) + 1);
    for (const V2VMessage& m : w.inbox) {
      if (written == count) break;
      const auto rec = wire::encode_wire(m);
      out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
      ++written;
    }
    v2v::advance(w, std::vector<Action>(w.active_ids().size(), Action{0.5, 0.0, 0.0}));
  }
  std::cout << "wrote " << written << " records to " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"v2vsim: multi-car highway-exit simulator with V2V messaging and PPO training"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a policy with PPO");
  add_config_args(train_cmd, train_args);
  train_cmd->add_option("--mode", train_args.mode, "baseline | v2v | emergent_continuous | emergent_select");
  train_cmd->add_option("--seed", train_args.seed, "training seed");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over several seeds");
  add_config_args(eval_cmd, eval_args.cfg);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file");
  eval_cmd->add_flag("--random", eval_args.random, "evaluate the uniform random policy instead");
  eval_cmd->add_option("--condition", eval_args.condition, "sunny | foggy | mixed");
  eval_cmd->add_option("--seeds", eval_args.seeds, "evaluation seeds")->delimiter(',');
  eval_cmd->add_option("--episodes", eval_args.episodes, "episodes per seed");
  eval_cmd->add_option("--comm-range", eval_args.comm_ranges, "one report per value; 'unlimited' allowed")->delimiter(',');
  eval_cmd->add_option("--label", eval_args.label, "model label in the table");

  RenderArgs render_args;
  auto* render_cmd = app.add_subcommand("render", "roll one episode and write PNG frames");
  add_config_args(render_cmd, render_args.cfg);
  render_cmd->add_option("policy", render_args.policy, "checkpoint file or 'random'")->required();
  render_cmd->add_option("--episode-seed", render_args.episode_seed, "episode seed");
  render_cmd->add_flag("!--sample", render_args.greedy, "sample actions instead of taking the mean");

  std::string dump_path;
  auto* dump_cmd = app.add_subcommand("protocol-dump", "decode 176-byte V2V wire records");
  dump_cmd->add_option("file", dump_path, "record file")->required();

  std::string sample_path;
  std::uint64_t sample_seed = 1;
  int sample_count = 4;
  auto* sample_cmd = app.add_subcommand("protocol-sample", "write wire records taken from a simulated episode");
  sample_cmd->add_option("file", sample_path, "output file")->required();
  sample_cmd->add_option("--seed", sample_seed, "episode seed");
  sample_cmd->add_option("--count", sample_count, "number of records")->check(CLI::PositiveNumber);

  ConfigArgs show_args;
  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");
  add_config_args(config_cmd, show_args);
  config_cmd->add_option("--mode", show_args.mode, "model mode");
  config_cmd->add_option("--seed", show_args.seed, "training seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*render_cmd) return cmd_render(render_args);
    if (*dump_cmd) return cmd_protocol_dump(dump_path);
    if (*sample_cmd) return cmd_protocol_sample(sample_path, sample_seed, sample_count);
    if (*config_cmd) {
      std::cout << to_json(resolve(show_args)).dump(2) << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 3;
  } catch (const FileError& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return 4;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
