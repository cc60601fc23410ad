#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trunk/config.hpp"
#include "trunk/evaluator.hpp"
#include "trunk/trainer.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// Sweep specification: one dotted config key, explicit values or an
// inclusive range, optional repeats.
// ---------------------------------------------------------------------------

struct SweepSpec {
  ExperimentConfig base_config;
  std::string parameter;        // dotted override key
  std::vector<double> values;   // non-empty after validation
  int repeats = 1;
};

// Inclusive range with endpoint tolerance 1e-9 (so 0.60..1.20 step 0.03
// yields all 21 points despite accumulated float error).
inline std::vector<double> sweep_range(double start, double stop,
                                       double step) {
  if (!(step > 0.0)) throw ValidationError("sweep step must be > 0");
  std::vector<double> values;
  for (int i = 0;; ++i) {
    double v = start + step * i;
    if (v > stop + 1e-9) break;
    values.push_back(v);
  }
  return values;
}

struct SweepRecord {
  double value = 0.0;
  double accuracy = 0.0;
  std::string tree_fingerprint;
  int depth = 0;
  double mean_groups_per_node = 0.0;
  std::string build_dir;
  uint64_t seed = 0;
  std::string status = "ok";  // ok | failed
  std::string error;          // diagnostics when failed
};

inline int tree_depth(const Trunk& t) {
  int d = 0;
  for (const auto& [id, n] : t.nodes) {
    (void)id;
    d = std::max(d, n.depth);
  }
  return d;
}

inline double mean_groups_per_node(const Trunk& t) {
  size_t internal = 0, groups = 0;
  for (const auto& [id, n] : t.nodes) {
    (void)id;
    if (n.is_leaf()) continue;
    ++internal;
    groups += n.grouping.partition.size();
  }
  return internal == 0 ? 0.0
                       : static_cast<double>(groups) /
                             static_cast<double>(internal);
}

// ---------------------------------------------------------------------------
// Durable execution: one JSON line per completed point appended to
// records.jsonl. Re-running skips points that already have a record, so an
// interrupted sweep resumes where it stopped with earlier records untouched.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json record_to_json(const SweepRecord& r) {
  nlohmann::json j;
  j["value"] = r.value;
  j["accuracy"] = r.accuracy;
  j["fingerprint"] = r.tree_fingerprint;
  j["depth"] = r.depth;
  j["mean_groups_per_node"] = r.mean_groups_per_node;
  j["build_dir"] = r.build_dir;
  j["seed"] = r.seed;
  j["status"] = r.status;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline SweepRecord record_from_json(const nlohmann::json& j) {
  SweepRecord r;
  r.value = j.at("value").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.tree_fingerprint = j.at("fingerprint").get<std::string>();
  r.depth = j.at("depth").get<int>();
  r.mean_groups_per_node = j.at("mean_groups_per_node").get<double>();
  r.build_dir = j.value("build_dir", "");
  r.seed = j.at("seed").get<uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", "");
  return r;
}

}  // namespace detail

inline std::vector<SweepRecord> read_sweep_records(const fs::path& sweep_dir) {
  std::vector<SweepRecord> records;
  fs::path log = sweep_dir / "records.jsonl";
  if (!fs::exists(log)) return records;
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    records.push_back(detail::record_from_json(nlohmann::json::parse(line)));
  }
  return records;
}

// Runs the sweep, durably appending records. stop_after > 0 aborts after
// that many newly computed points (smoke runs and interruption tests).
inline std::vector<SweepRecord> run_sweep(const SweepSpec& spec,
                                          const fs::path& sweep_dir,
                                          size_t stop_after = 0,
                                          const fs::path& data_dir =
                                              data_root()) {
  if (spec.values.empty()) throw ValidationError("sweep has no values");
  if (spec.repeats < 1) throw ValidationError("sweep repeats must be >= 1");
  validate(spec.base_config);
  fs::create_directories(sweep_dir);

  nlohmann::json sj;
  sj["parameter"] = spec.parameter;
  sj["values"] = spec.values;
  sj["repeats"] = spec.repeats;
  sj["base_config_digest"] = config_digest(spec.base_config);
  if (fs::exists(sweep_dir / "sweep.json")) {
    nlohmann::json stored =
        nlohmann::json::parse(read_text_file(sweep_dir / "sweep.json"));
    if (stored != sj)
      throw ValidationError(
          "sweep spec differs from the one recorded in " +
          (sweep_dir / "sweep.json").string() +
          "; refusing to mix sweeps in one directory");
  }
  write_text_file(sweep_dir / "sweep.json", sj.dump(2) + "\n");
  save_config(spec.base_config, sweep_dir / "base_config.yaml");

  std::vector<SweepRecord> done = read_sweep_records(sweep_dir);
  size_t completed = done.size();
  size_t total_points = spec.values.size() * static_cast<size_t>(spec.repeats);
  size_t fresh = 0;

  for (size_t point = completed; point < total_points; ++point) {
    if (stop_after > 0 && fresh >= stop_after) break;
    size_t vi = point / static_cast<size_t>(spec.repeats);
    size_t rep = point % static_cast<size_t>(spec.repeats);
    double value = spec.values[vi];

    SweepRecord rec;
    rec.value = value;
    rec.build_dir = (sweep_dir / "points" / std::to_string(point)).string();
    // repeats explore run-to-run variation, so each repeat gets its own seed
    rec.seed = spec.base_config.seed + rep;

    try {
      ExperimentConfig cfg = apply_overrides(
          spec.base_config,
          {spec.parameter + "=" + format_double(value),
           "seed=" + std::to_string(rec.seed)});
      BuildReport build = build_and_train(cfg, rec.build_dir, 0, false,
                                          data_dir);
      TreeRuntime rt = TreeRuntime::load(build.tree);
      Dataset test =
          load_raw_split(cfg.dataset_name, "test", cfg, data_dir);
      Dataset cooked = apply_pipeline_once(
          test, build_pipeline(cfg.splits.test.transforms, test.shape),
          named_stream("augment/test"));
      EvalResult ev = evaluate(rt, cooked);
      rec.accuracy = ev.accuracy;
      rec.tree_fingerprint = fingerprint(build.tree);
      rec.depth = tree_depth(build.tree);
      rec.mean_groups_per_node = mean_groups_per_node(build.tree);
      rec.status = "ok";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
    }

    {
      std::ofstream log(sweep_dir / "records.jsonl",
                        std::ios::app | std::ios::binary);
      log << detail::record_to_json(rec).dump() << "\n";
      log.flush();
    }
    done.push_back(rec);
    ++fresh;
  }
  return done;
}

// ---------------------------------------------------------------------------
// Analysis and emission
// ---------------------------------------------------------------------------

// Groups records by structural fingerprint, values in record order.
inline std::map<std::string, std::vector<double>> distinct_trees(
    const std::vector<SweepRecord>& records) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) groups[r.tree_fingerprint].push_back(r.value);
  return groups;
}

inline void emit_csv(const std::vector<SweepRecord>& records,
                     const fs::path& path) {
  std::string out =
      "value,accuracy,fingerprint,depth,mean_groups_per_node,seed,status\n";
  for (const auto& r : records) {
    out += format_double(r.value) + "," + format_double(r.accuracy) + "," +
           r.tree_fingerprint + "," + std::to_string(r.depth) + "," +
           format_double(r.mean_groups_per_node) + "," +
           std::to_string(r.seed) + "," + r.status + "\n";
  }
  write_text_file(path, out);
}

inline std::vector<SweepRecord> parse_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<SweepRecord> records;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 7)
      throw std::runtime_error("bad csv row: " + line);
    SweepRecord r;
    r.value = std::stod(cols[0]);
    r.accuracy = std::stod(cols[1]);
    r.tree_fingerprint = cols[2];
    r.depth = std::stoi(cols[3]);
    r.mean_groups_per_node = std::stod(cols[4]);
    r.seed = std::stoull(cols[5]);
    r.status = cols[6];
    records.push_back(r);
  }
  return records;
}

// Accuracy-vs-value scatter as SVG, one color per tree fingerprint, with a
// legend entry per fingerprint.
inline void emit_plot(const std::vector<SweepRecord>& records,
                      const fs::path& path) {
  if (records.empty())
    throw ValidationError("cannot plot an empty record set");
  static const char* palette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
                                  "#ff7f00", "#a65628", "#f781bf", "#999999",
                                  "#66c2a5", "#fc8d62"};
  constexpr int kW = 720, kH = 480, kPad = 60;

  double xmin = records[0].value, xmax = records[0].value;
  double ymin = 0.0, ymax = 1.0;
  for (const auto& r : records) {
    xmin = std::min(xmin, r.value);
    xmax = std::max(xmax, r.value);
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  auto sx = [&](double v) {
    return kPad + (v - xmin) / (xmax - xmin) * (kW - 2 * kPad);
  };
  auto sy = [&](double v) {
    return kH - kPad - (v - ymin) / (ymax - ymin) * (kH - 2 * kPad);
  };

  std::map<std::string, size_t> color_of;
  for (const auto& r : records)
    if (!color_of.count(r.tree_fingerprint))
      color_of[r.tree_fingerprint] = color_of.size();

  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
      std::to_string(kW) + "\" height=\"" + std::to_string(kH) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto line = [&](double x1, double y1, double x2, double y2) {
    svg += "<line x1=\"" + format_double(x1) + "\" y1=\"" + format_double(y1) +
           "\" x2=\"" + format_double(x2) + "\" y2=\"" + format_double(y2) +
           "\" stroke=\"black\"/>\n";
  };
  line(kPad, kH - kPad, kW - kPad, kH - kPad);
  line(kPad, kPad, kPad, kH - kPad);
  svg += "<text x=\"" + std::to_string(kW / 2) + "\" y=\"" +
         std::to_string(kH - 16) + "\" text-anchor=\"middle\">parameter "
         "value</text>\n";
  svg += "<text x=\"16\" y=\"" + std::to_string(kH / 2) +
         "\" transform=\"rotate(-90 16 " + std::to_string(kH / 2) +
         ")\" text-anchor=\"middle\">accuracy</text>\n";

  for (const auto& r : records) {
    std::string color =
        r.status == "ok"
            ? palette[color_of[r.tree_fingerprint] % std::size(palette)]
            : "black";
    svg += "<circle cx=\"" + format_double(sx(r.value)) + "\" cy=\"" +
           format_double(sy(r.accuracy)) + "\" r=\"5\" fill=\"" + color +
           "\"/>\n";
  }

  int li = 0;
  for (const auto& [fp, idx] : color_of) {
    double y = kPad + 18.0 * li++;
    svg += "<circle cx=\"" + std::to_string(kW - kPad + 14) + "\" cy=\"" +
           format_double(y) + "\" r=\"5\" fill=\"" +
           palette[idx % std::size(palette)] + "\"/>\n";
    svg += "<text class=\"legend\" x=\"" + std::to_string(kW - kPad + 24) +
           "\" y=\"" + format_double(y + 4) + "\" font-size=\"10\">" +
           fp.substr(0, 8) + "</text>\n";
  }
  svg += "</svg>\n";
  write_text_file(path, svg);
}

}  // namespace trunk
