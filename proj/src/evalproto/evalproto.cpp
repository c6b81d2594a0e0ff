#include "peakforge/evalproto.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <utility>

#include "peakforge/error.hpp"

namespace peakforge {

namespace {

using Clock = std::chrono::steady_clock;

Clock::duration secs(double s) {
  return std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(s));
}

// Writing to a pipe whose reader died must surface as EPIPE, not kill the
// process.
void ignore_sigpipe_once() {
  static const int done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return 0;
  }();
  (void)done;
}

std::string quote_line(const std::string& line) {
  constexpr std::size_t kMax = 200;
  if (line.size() <= kMax) return line;
  return line.substr(0, kMax) + "...";
}

std::string describe_exit(int status) {
  if (WIFEXITED(status))
    return "evaluator exited with status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status))
    return "evaluator killed by signal " + std::to_string(WTERMSIG(status));
  return "evaluator exited";
}

bool write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

}  // namespace

nlohmann::json EvalRequest::to_json() const {
  return {{"id", id},
          {"config", config_to_json(config)},
          {"objective_names", objective_names},
          {"seed", seed}};
}

struct Evaluator::Pending {
  std::vector<std::string> objective_names;
  EvalResponse resp;
  bool done = false;
};

Evaluator::Evaluator(std::vector<std::string> command)
    : Evaluator(std::move(command), Options{}) {}

Evaluator::Evaluator(std::vector<std::string> command, Options opt)
    : command_(std::move(command)), opt_(opt) {
  if (command_.empty()) throw ConfigError("evaluator command is empty");
  ignore_sigpipe_once();
  std::unique_lock<std::mutex> lk(mu_);
  ensure_child(lk);
}

Evaluator::~Evaluator() {
  {
    std::unique_lock<std::mutex> lk(mu_);
    fail_pending_locked("evaluator handle shut down");
    kill_child_locked();
  }
  if (reader_.joinable()) reader_.join();
}

int Evaluator::respawn_count() const {
  std::lock_guard<std::mutex> lk(mu_);
  return respawns_ > 0 ? respawns_ : 0;
}

std::size_t Evaluator::in_flight() const {
  std::lock_guard<std::mutex> lk(mu_);
  return pending_.size();
}

EvalResponse Evaluator::evaluate(const EvalRequest& req) {
  return evaluate(req, opt_.eval_timeout_s);
}

EvalResponse Evaluator::evaluate(const EvalRequest& req, double timeout_s) {
  if (req.id == 0) throw ConfigError("evaluation request ids must be positive");
  auto p = std::make_shared<Pending>();
  p->objective_names = req.objective_names;
  p->resp.id = req.id;
  {
    std::unique_lock<std::mutex> lk(mu_);
    ensure_child(lk);
    if (!pending_.emplace(req.id, p).second)
      throw ConfigError("evaluation request id " + std::to_string(req.id) +
                        " is already in flight");
  }

  std::string line = req.to_json().dump();
  line.push_back('\n');
  {
    std::lock_guard<std::mutex> wl(write_mu_);
    // A fd of -1 means a peer just tore the child down; the reader already
    // failed this entry, so fall through to the wait.
    if (child_stdin_ >= 0) write_all(child_stdin_, line.data(), line.size());
  }

  std::unique_lock<std::mutex> lk(mu_);
  const auto deadline = Clock::now() + secs(timeout_s);
  cv_.wait_until(lk, deadline, [&] { return p->done; });
  if (p->done) return p->resp;

  // Deadline expired: this trial fails, the child is killed (peers in flight
  // become crash losses), and the next evaluate() respawns it.
  pending_.erase(req.id);
  p->done = true;
  p->resp.ok = false;
  char buf[96];
  std::snprintf(buf, sizeof buf, "no response within %gs; evaluator killed",
                timeout_s);
  p->resp.detail = buf;
  fail_pending_locked(
      "evaluator killed while this request was in flight (a peer request "
      "timed out)");
  kill_child_locked();
  return p->resp;
}

void Evaluator::ensure_child(std::unique_lock<std::mutex>& lk) {
  while (!(child_live_ && handshake_done_)) {
    if (spawning_) {
      cv_.wait(lk);
      continue;
    }
    spawning_ = true;
    try {
      if (reader_.joinable()) {
        std::thread old = std::move(reader_);
        lk.unlock();
        old.join();
        lk.lock();
      }
      spawn_child_locked();
      const auto deadline = Clock::now() + secs(opt_.handshake_timeout_s);
      cv_.wait_until(lk, deadline, [&] {
        return handshake_done_ || !child_live_ || !spawn_error_.empty();
      });
      if (!handshake_done_) {
        std::string why = spawn_error_;
        if (why.empty()) {
          char buf[96];
          std::snprintf(buf, sizeof buf,
                        "evaluator handshake timed out after %gs",
                        opt_.handshake_timeout_s);
          why = buf;
        }
        kill_child_locked();
        if (reader_.joinable()) {
          std::thread old = std::move(reader_);
          lk.unlock();
          old.join();
          lk.lock();
        }
        throw ProtocolError(why);
      }
    } catch (...) {
      spawning_ = false;
      cv_.notify_all();
      throw;
    }
    spawning_ = false;
    cv_.notify_all();
  }
}

void Evaluator::spawn_child_locked() {
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe(in_pipe) != 0)
    throw IoError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw IoError(std::string("pipe: ") + std::strerror(errno));
  }
  if (::pipe(err_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw IoError(std::string("pipe: ") + std::strerror(errno));
  }
  ::fcntl(err_pipe[1], F_SETFD, FD_CLOEXEC);

  pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1],
                   err_pipe[0], err_pipe[1]})
      ::close(fd);
    throw IoError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1],
                   err_pipe[0]})
      ::close(fd);
    std::vector<char*> argv;
    argv.reserve(command_.size() + 1);
    for (const std::string& a : command_)
      argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    int err = errno;
    (void)!::write(err_pipe[1], &err, sizeof err);
    ::_exit(127);
  }

  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  // The exec-errno pipe closes without data iff exec succeeded.
  int exec_errno = 0;
  ssize_t n;
  do {
    n = ::read(err_pipe[0], &exec_errno, sizeof exec_errno);
  } while (n < 0 && errno == EINTR);
  ::close(err_pipe[0]);
  if (n > 0) {
    ::waitpid(pid, nullptr, 0);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw IoError("failed to start evaluator '" + command_[0] +
                  "': " + std::strerror(exec_errno));
  }

  child_pid_ = pid;
  {
    std::lock_guard<std::mutex> wl(write_mu_);
    child_stdin_ = in_pipe[1];
  }
  ++generation_;
  ++respawns_;
  child_live_ = true;
  handshake_done_ = false;
  spawn_error_.clear();
  reader_ = std::thread(&Evaluator::reader_loop, this, out_pipe[0], generation_);
}

void Evaluator::kill_child_locked() {
  if (child_live_ && child_pid_ > 0) ::kill(child_pid_, SIGKILL);
  child_live_ = false;
  std::lock_guard<std::mutex> wl(write_mu_);
  if (child_stdin_ >= 0) {
    ::close(child_stdin_);
    child_stdin_ = -1;
  }
}

void Evaluator::fail_pending_locked(const std::string& detail) {
  for (auto& [id, p] : pending_) {
    if (p->done) continue;
    p->done = true;
    p->resp.ok = false;
    p->resp.objectives.clear();
    p->resp.detail = detail;
  }
  pending_.clear();
  cv_.notify_all();
}

void Evaluator::reader_loop(int fd, std::uint64_t generation) {
  std::string buf;
  char chunk[4096];
  for (;;) {
    ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t pos;
    while ((pos = buf.find('\n')) != std::string::npos) {
      std::string line = buf.substr(0, pos);
      buf.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) handle_line(line, generation);
    }
  }
  ::close(fd);

  // Child closed stdout (or died). Mark it dead first so nobody signals the
  // pid after it is reaped, then collect the exit status and fail whatever
  // was still in flight.
  pid_t pid = -1;
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (generation == generation_) {
      pid = child_pid_;
      child_live_ = false;
    }
  }
  if (pid <= 0) return;
  ::kill(pid, SIGKILL);  // no-op for a zombie; stops a lingering child
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (generation != generation_) return;
    child_pid_ = -1;
    if (!handshake_done_ && spawn_error_.empty())
      spawn_error_ = describe_exit(status) + " before completing the handshake";
    fail_pending_locked(describe_exit(status) + " during evaluation");
    {
      std::lock_guard<std::mutex> wl(write_mu_);
      if (child_stdin_ >= 0) {
        ::close(child_stdin_);
        child_stdin_ = -1;
      }
    }
    cv_.notify_all();
  }
}

void Evaluator::handle_line(const std::string& line, std::uint64_t generation) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);

  std::lock_guard<std::mutex> lk(mu_);
  if (generation != generation_) return;

  if (!handshake_done_) {
    if (j.is_object() && j.value("proto", "") == kEvalProtoName &&
        j.contains("version")) {
      const nlohmann::json& v = j["version"];
      if (v.is_number_integer() &&
          v.get<std::int64_t>() == kEvalProtoVersion) {
        handshake_done_ = true;
        cv_.notify_all();
        return;
      }
      spawn_error_ = "evaluator protocol version mismatch: child offered " +
                     v.dump() + ", this tool speaks version " +
                     std::to_string(kEvalProtoVersion);
      cv_.notify_all();
      return;
    }
    spawn_error_ =
        "evaluator handshake: expected {\"proto\": \"peakforge-eval\", "
        "\"version\": 1}, got: " +
        quote_line(line);
    cv_.notify_all();
    return;
  }

  // Any line we cannot attribute to a request id poisons the stream: kill the
  // child and fail everything in flight, quoting the offender.
  if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
      !j["id"].is_number_integer() || j["id"].get<std::int64_t>() <= 0) {
    fail_pending_locked("evaluator protocol error, response line was: " +
                        quote_line(line));
    kill_child_locked();
    return;
  }

  const auto id = j["id"].get<std::uint64_t>();
  auto it = pending_.find(id);
  if (it == pending_.end()) return;  // stale reply for a finished request
  std::shared_ptr<Pending> p = it->second;

  auto finish = [&](bool ok, std::map<std::string, double> obj,
                    std::string detail) {
    p->resp.ok = ok;
    p->resp.objectives = std::move(obj);
    p->resp.detail = std::move(detail);
    p->done = true;
    pending_.erase(it);
    cv_.notify_all();
  };

  const std::string status = j.value("status", "");
  if (status == "fail") {
    finish(false, {}, j.value("detail", "evaluator reported failure"));
    return;
  }
  if (status != "ok") {
    finish(false, {},
           "evaluator response has status " + j["status"].dump() +
               " (expected \"ok\" or \"fail\")");
    return;
  }
  if (!j.contains("objectives") || !j["objectives"].is_object()) {
    finish(false, {}, "evaluator \"ok\" response lacks an objectives object");
    return;
  }
  const nlohmann::json& obj = j["objectives"];
  std::map<std::string, double> values;
  for (const std::string& name : p->objective_names) {
    if (!obj.contains(name)) {
      finish(false, {},
             "evaluator response is missing objective \"" + name + "\"");
      return;
    }
    if (!obj[name].is_number() ||
        !std::isfinite(obj[name].get<double>())) {
      finish(false, {},
             "evaluator reported a non-finite value for objective \"" + name +
                 "\": " + obj[name].dump());
      return;
    }
    values[name] = obj[name].get<double>();
  }
  if (obj.size() != p->objective_names.size()) {
    finish(false, {},
           "evaluator response carries extra objective keys: " + obj.dump());
    return;
  }
  finish(true, std::move(values), j.value("detail", ""));
}

}  // namespace peakforge
