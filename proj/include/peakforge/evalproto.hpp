#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "peakforge/space.hpp"

namespace peakforge {

inline constexpr const char* kEvalProtoName = "peakforge-eval";
inline constexpr int kEvalProtoVersion = 1;

/// One evaluation job sent to an external evaluator process.
struct EvalRequest {
  std::uint64_t id = 0;  // must be positive and unique per run
  Configuration config;
  std::vector<std::string> objective_names;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Terminal outcome of one EvalRequest. Exactly one of these is produced per
/// request id, whether the child answered, timed out, or died.
struct EvalResponse {
  std::uint64_t id = 0;
  bool ok = false;
  /// Present and finite for every requested objective name iff ok.
  std::map<std::string, double> objectives;
  /// Human-readable diagnostics; required when !ok.
  std::string detail;
};

/// Handle to one external evaluator child process speaking newline-delimited
/// JSON on stdin/stdout (stderr passes through for logging).
///
/// The constructor spawns the command and waits for the handshake line
///   {"proto": "peakforge-eval", "version": 1}
/// throwing IoError if the command cannot be started and ProtocolError (with
/// the offending line, when there is one) if the handshake is missing, late,
/// malformed, or reports an unsupported version.
///
/// evaluate() blocks until its request reaches a terminal outcome. Calls are
/// thread-safe and may be pipelined: writes are serialized, and a reader
/// thread matches response lines to waiting callers by id, so out-of-order
/// replies are fine. A request that exceeds its deadline fails with ok=false,
/// the child is killed, and any other requests in flight on that child fail
/// as crash losses; the next evaluate() respawns the child transparently.
/// Unparseable response lines are treated the same way, with the raw line
/// quoted in the failure detail. evaluate() throws only when a respawn
/// itself fails.
class Evaluator {
 public:
  struct Options {
    double handshake_timeout_s = 10.0;
    double eval_timeout_s = 600.0;  // default deadline; evaluate() can override
  };

  explicit Evaluator(std::vector<std::string> command);
  Evaluator(std::vector<std::string> command, Options opt);
  ~Evaluator();

  Evaluator(const Evaluator&) = delete;
  Evaluator& operator=(const Evaluator&) = delete;

  EvalResponse evaluate(const EvalRequest& req);
  EvalResponse evaluate(const EvalRequest& req, double timeout_s);

  /// Number of times the child has been (re)started beyond the initial spawn.
  int respawn_count() const;
  /// Requests currently awaiting a response (for pipelining callers).
  std::size_t in_flight() const;

 private:
  struct Pending;

  void ensure_child(std::unique_lock<std::mutex>& lk);
  void spawn_child_locked();
  void kill_child_locked();
  void fail_pending_locked(const std::string& detail);
  void reader_loop(int fd, std::uint64_t generation);
  void handle_line(const std::string& line, std::uint64_t generation);

  std::vector<std::string> command_;
  Options opt_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, std::shared_ptr<Pending>> pending_;
  std::uint64_t generation_ = 0;
  bool child_live_ = false;
  bool handshake_done_ = false;
  bool spawning_ = false;
  std::string spawn_error_;
  int respawns_ = -1;

  std::mutex write_mu_;
  int child_pid_ = -1;
  int child_stdin_ = -1;
  std::thread reader_;
};

}  // namespace peakforge
