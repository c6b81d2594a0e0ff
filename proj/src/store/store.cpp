#include "peakforge/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common/timefmt.hpp"
#include "peakforge/error.hpp"
#include "peakforge/pareto.hpp"

namespace peakforge {

namespace fs = std::filesystem;

namespace {

std::string trials_path(const std::string& dir) { return dir + "/trials.jsonl"; }
std::string manifest_path(const std::string& dir) {
  return dir + "/manifest.json";
}

/// Shortest round-trip decimal form, shared by CSV and JSON exports so the
/// same value always prints the same bytes.
std::string fmt_real(double v) { return nlohmann::json(v).dump(); }

void write_file_durable(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0)
    throw IoError("cannot write " + tmp + ": " + std::strerror(errno));
  const char* p = content.data();
  std::size_t left = content.size();
  while (left > 0) {
    ssize_t w = ::write(fd, p, left);
    if (w < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw IoError("cannot write " + tmp + ": " + std::strerror(err));
    }
    p += w;
    left -= static_cast<std::size_t>(w);
  }
  ::fsync(fd);
  ::close(fd);
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move " + tmp + " into place: " +
                  std::strerror(errno));
}

void fsync_dir(const std::string& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace

SearchBudget RunManifest::budget() const {
  SearchBudget b;
  b.max_evaluations = max_evaluations;
  b.initial_random = initial_random;
  b.workers = workers;
  b.wall_clock_limit_s = wall_clock_limit_s;
  return b;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j{{"format_version", 1},
                   {"run_id", run_id},
                   {"space", space_doc},
                   {"objectives", objectives.to_json()},
                   {"max_evaluations", max_evaluations},
                   {"initial_random", initial_random},
                   {"workers", workers},
                   {"mode", mode},
                   {"master_seed", master_seed},
                   {"task", task},
                   {"eval_timeout_s", eval_timeout_s},
                   {"kappa", kappa},
                   {"candidate_pool", candidate_pool},
                   {"rho", rho},
                   {"tool_version", tool_version},
                   {"created_at", created_at}};
  if (wall_clock_limit_s) j["wall_clock_limit_s"] = *wall_clock_limit_s;
  if (epoch_cap) j["epoch_cap"] = *epoch_cap;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format_version", 0) != 1)
      throw ConfigError("unsupported manifest format_version");
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.space_doc = j.at("space");
    m.objectives = ObjectiveSpec::from_json(j.at("objectives"));
    m.max_evaluations = j.at("max_evaluations").get<std::uint64_t>();
    m.initial_random = j.at("initial_random").get<std::uint64_t>();
    m.workers = j.at("workers").get<std::uint64_t>();
    if (j.contains("wall_clock_limit_s"))
      m.wall_clock_limit_s = j["wall_clock_limit_s"].get<double>();
    m.mode = j.at("mode").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.task = j.at("task").get<std::string>();
    if (j.contains("epoch_cap"))
      m.epoch_cap = j["epoch_cap"].get<std::uint64_t>();
    m.eval_timeout_s = j.at("eval_timeout_s").get<double>();
    m.kappa = j.at("kappa").get<double>();
    m.candidate_pool = j.at("candidate_pool").get<std::uint64_t>();
    m.rho = j.at("rho").get<double>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid run manifest: ") + e.what());
  }
}

std::vector<std::string> manifest_diff(const RunManifest& expected,
                                       const RunManifest& found) {
  std::vector<std::string> diff;
  if (expected.space_doc.dump() != found.space_doc.dump())
    diff.push_back("space");
  if (expected.objectives != found.objectives) diff.push_back("objectives");
  if (expected.mode != found.mode) diff.push_back("mode");
  if (expected.master_seed != found.master_seed) diff.push_back("master_seed");
  if (expected.task != found.task) diff.push_back("task");
  if (expected.epoch_cap != found.epoch_cap) diff.push_back("epoch_cap");
  if (expected.initial_random != found.initial_random)
    diff.push_back("initial_random");
  if (expected.kappa != found.kappa) diff.push_back("kappa");
  if (expected.candidate_pool != found.candidate_pool)
    diff.push_back("candidate_pool");
  if (expected.rho != found.rho) diff.push_back("rho");
  return diff;
}

nlohmann::json trial_record_to_json(const TrialRecord& rec,
                                    const ObjectiveSpec& spec) {
  const Trial& t = rec.trial;
  nlohmann::json j{{"trial_id", t.trial_id},
                   {"status", status_name(t.status)},
                   {"proposer", proposer_name(t.proposer)},
                   {"config", config_to_json(t.config)},
                   {"seed", t.seed},
                   {"duration_s", t.duration_s},
                   {"started_at", rec.started_at},
                   {"ended_at", rec.ended_at},
                   {"worker", rec.worker}};
  if (t.objectives) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t i = 0; i < spec.size(); ++i)
      obj[spec.names[i]] = (*t.objectives)[i];
    j["objectives"] = obj;
  }
  if (t.scalarized) j["scalarized"] = *t.scalarized;
  if (!t.detail.empty()) j["detail"] = t.detail;
  return j;
}

TrialRecord trial_record_from_json(const nlohmann::json& j,
                                   const SearchSpace& space,
                                   const ObjectiveSpec& spec) {
  try {
    TrialRecord rec;
    Trial& t = rec.trial;
    t.trial_id = j.at("trial_id").get<std::uint64_t>();
    t.status = status_from_name(j.at("status").get<std::string>());
    t.proposer = proposer_from_name(j.at("proposer").get<std::string>());
    t.config = config_from_json(j.at("config"), space);
    t.seed = j.at("seed").get<std::uint64_t>();
    t.duration_s = j.at("duration_s").get<double>();
    if (j.contains("objectives")) {
      std::vector<double> obj;
      obj.reserve(spec.size());
      for (const std::string& name : spec.names)
        obj.push_back(j["objectives"].at(name).get<double>());
      t.objectives = std::move(obj);
    }
    if (j.contains("scalarized")) t.scalarized = j["scalarized"].get<double>();
    if (j.contains("detail")) t.detail = j["detail"].get<std::string>();
    rec.started_at = j.at("started_at").get<std::string>();
    rec.ended_at = j.at("ended_at").get<std::string>();
    rec.worker = j.at("worker").get<std::uint64_t>();
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid trial record: ") + e.what());
  }
}

RunStore::RunStore(std::string dir, RunManifest manifest)
    : dir_(std::move(dir)),
      manifest_(std::move(manifest)),
      space_(load_space(manifest_.space_doc)) {}

RunStore RunStore::create(const std::string& dir, const RunManifest& manifest) {
  std::error_code ec;
  if (fs::exists(manifest_path(dir)))
    throw ConfigError("directory " + dir + " already contains a run");
  fs::create_directories(dir, ec);
  fs::create_directories(dir + "/exports", ec);
  if (!fs::is_directory(dir))
    throw IoError("cannot create run directory " + dir);
  write_file_durable(manifest_path(dir), manifest.to_json().dump(2) + "\n");
  // An empty log marks the run as started even if it crashes immediately.
  int fd = ::open(trials_path(dir).c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0)
    throw IoError("cannot create " + trials_path(dir) + ": " +
                  std::strerror(errno));
  ::close(fd);
  fsync_dir(dir);
  return RunStore(dir, manifest);
}

RunStore RunStore::open(const std::string& dir) {
  std::ifstream in(manifest_path(dir));
  if (!in)
    throw IoError("cannot open " + manifest_path(dir) +
                  " (is this a run directory?)");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw IoError("corrupt manifest: " + manifest_path(dir));
  return RunStore(dir, RunManifest::from_json(j));
}

void RunStore::append_trial(const TrialRecord& rec) {
  std::string line = trial_record_to_json(rec, manifest_.objectives).dump();
  line.push_back('\n');
  int fd = ::open(trials_path(dir_).c_str(), O_WRONLY | O_APPEND, 0644);
  if (fd < 0)
    throw IoError("cannot append to " + trials_path(dir_) + ": " +
                  std::strerror(errno));
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    ssize_t w = ::write(fd, p, left);
    if (w < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw IoError("append to " + trials_path(dir_) +
                    " failed: " + std::strerror(err));
    }
    p += w;
    left -= static_cast<std::size_t>(w);
  }
  if (::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    throw IoError("fsync of " + trials_path(dir_) +
                  " failed: " + std::strerror(err));
  }
  ::close(fd);
}

RunStore::LoadReport RunStore::load_trials() const {
  std::ifstream in(trials_path(dir_), std::ios::binary);
  if (!in)
    throw IoError("cannot open " + trials_path(dir_) + ": " +
                  std::strerror(errno));
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();

  LoadReport report;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      // A line without its newline is the torn tail of a crashed append.
      report.dropped_partial_line = true;
      report.note = "dropped truncated final line (" +
                    std::to_string(content.size() - pos) + " bytes)";
      break;
    }
    ++line_no;
    const std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw IoError("corrupt trial log: " + trials_path(dir_) + " line " +
                    std::to_string(line_no));
    report.records.push_back(
        trial_record_from_json(j, space_, manifest_.objectives));
  }
  return report;
}

std::string RunStore::export_pareto_csv() const {
  const auto report = load_trials();
  if (report.records.empty())
    throw ConfigError("run " + dir_ + " has no logged trials to export");
  const ObjectiveSpec& spec = manifest_.objectives;

  ParetoArchive archive(spec);
  std::map<std::uint64_t, const TrialRecord*> by_id;
  for (const TrialRecord& r : report.records) {
    by_id[r.trial.trial_id] = &r;
    if (r.trial.status == TrialStatus::ok && r.trial.objectives)
      archive.insert(r.trial.trial_id, *r.trial.objectives);
  }

  std::vector<ArchiveEntry> entries = archive.entries();
  std::sort(entries.begin(), entries.end(),
            [](const ArchiveEntry& a, const ArchiveEntry& b) {
              if (a.values[0] != b.values[0]) return a.values[0] < b.values[0];
              return a.trial_id < b.trial_id;
            });

  std::string out = "trial_id";
  for (const std::string& name : spec.names) out += "," + name;
  out += "\n";
  for (const ArchiveEntry& e : entries) {
    out += std::to_string(e.trial_id);
    for (double v : e.values) out += "," + fmt_real(v);
    out += "\n";
  }
  const std::string path = dir_ + "/exports/pareto.csv";
  write_file_durable(path, out);
  return path;
}

std::string RunStore::export_convergence_csv() const {
  const auto report = load_trials();
  if (report.records.empty())
    throw ConfigError("run " + dir_ + " has no logged trials to export");
  const ObjectiveSpec& spec = manifest_.objectives;
  const std::size_t d = spec.size();
  std::string out;

  if (d >= 4) {
    // Hypervolume is not computed at this dimensionality; fall back to
    // per-objective running bests in raw units.
    out = "evaluation_index";
    for (const std::string& name : spec.names) out += ",best_" + name;
    out += "\n";
    std::vector<double> best(d, 0.0);
    bool seen = false;
    std::uint64_t index = 0;
    for (const TrialRecord& r : report.records) {
      ++index;
      if (r.trial.status == TrialStatus::ok && r.trial.objectives) {
        const auto& obj = *r.trial.objectives;
        for (std::size_t i = 0; i < d; ++i) {
          const bool better = spec.directions[i] == Direction::minimize
                                  ? obj[i] < best[i]
                                  : obj[i] > best[i];
          if (!seen || better) best[i] = obj[i];
        }
        seen = true;
      }
      out += std::to_string(index);
      for (std::size_t i = 0; i < d; ++i)
        out += "," + (seen ? fmt_real(best[i]) : std::string());
      out += "\n";
    }
  } else {
    const bool with_hv = d == 2 || d == 3;
    out = with_hv ? "evaluation_index,best_scalar_so_far,hypervolume\n"
                  : "evaluation_index,best_scalar_so_far\n";
    const HypervolumeSeries series = hypervolume_series(report.records, spec);
    bool have_scalar = false;
    double best_scalar = 0.0;
    std::uint64_t index = 0;
    for (const TrialRecord& r : report.records) {
      ++index;
      if (r.trial.status == TrialStatus::ok && r.trial.scalarized) {
        const double s = *r.trial.scalarized;
        if (!have_scalar || s < best_scalar) best_scalar = s;
        have_scalar = true;
      }
      out += std::to_string(index);
      out += "," + (have_scalar ? fmt_real(best_scalar) : std::string());
      if (with_hv) {
        const double hv = series.points.empty()
                              ? 0.0
                              : series.points[index - 1].second;
        out += "," + (series.points.empty() ? std::string() : fmt_real(hv));
      }
      out += "\n";
    }
  }

  const std::string path = dir_ + "/exports/convergence.csv";
  write_file_durable(path, out);
  return path;
}

std::string RunStore::export_best_json() const {
  const auto report = load_trials();
  if (report.records.empty())
    throw ConfigError("run " + dir_ + " has no logged trials to export");
  const ObjectiveSpec& spec = manifest_.objectives;
  const std::size_t d = spec.size();

  nlohmann::json best_per = nlohmann::json::object();
  std::vector<const TrialRecord*> best(d, nullptr);
  for (const TrialRecord& r : report.records) {
    if (r.trial.status != TrialStatus::ok || !r.trial.objectives) continue;
    const auto adj = direction_adjusted(spec, *r.trial.objectives);
    for (std::size_t i = 0; i < d; ++i) {
      if (!best[i]) {
        best[i] = &r;
        continue;
      }
      const auto cur = direction_adjusted(spec, *best[i]->trial.objectives);
      if (adj[i] < cur[i]) best[i] = &r;
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    if (best[i])
      best_per[spec.names[i]] = trial_record_to_json(*best[i], spec);

  nlohmann::json doc{{"best_per_objective", best_per}};

  if (d == 2 || d == 3) {
    ParetoArchive archive(spec);
    std::map<std::uint64_t, const TrialRecord*> by_id;
    std::vector<std::vector<double>> adjusted;
    for (const TrialRecord& r : report.records) {
      if (r.trial.status != TrialStatus::ok || !r.trial.objectives) continue;
      by_id[r.trial.trial_id] = &r;
      archive.insert(r.trial.trial_id, *r.trial.objectives);
      adjusted.push_back(direction_adjusted(spec, *r.trial.objectives));
    }
    if (archive.size() > 0) {
      const auto ref = hypervolume_reference(adjusted);
      std::vector<std::vector<double>> front;
      for (const ArchiveEntry& e : archive.entries())
        front.push_back(direction_adjusted(spec, e.values));
      const double total = hypervolume_points(front, ref);
      const TrialRecord* knee = nullptr;
      double knee_contrib = -1.0;
      for (std::size_t i = 0; i < front.size(); ++i) {
        std::vector<std::vector<double>> rest;
        for (std::size_t k = 0; k < front.size(); ++k)
          if (k != i) rest.push_back(front[k]);
        const double without =
            rest.empty() ? 0.0 : hypervolume_points(rest, ref);
        const double contrib = total - without;
        const std::uint64_t id = archive.entries()[i].trial_id;
        if (contrib > knee_contrib ||
            (contrib == knee_contrib && knee &&
             id < knee->trial.trial_id)) {
          knee_contrib = contrib;
          knee = by_id.at(id);
        }
      }
      if (knee) {
        doc["knee"] = trial_record_to_json(*knee, spec);
        doc["knee_hypervolume_contribution"] = knee_contrib;
      }
    }
  }

  const std::string path = dir_ + "/exports/best.json";
  write_file_durable(path, doc.dump(2) + "\n");
  return path;
}

}  // namespace peakforge
