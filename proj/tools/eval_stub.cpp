// Reference external evaluator speaking the peakforge-eval NDJSON protocol.
//
// Reads one JSON request per line on stdin, writes one JSON response per line
// on stdout, and exits when stdin closes. The default objective is a cheap
// deterministic function of the config so that conformance tests can predict
// the exact values. Misbehaviors for protocol testing are switched on by
// flags; see --help.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

using nlohmann::json;

namespace {

struct Flags {
  std::int64_t sleep_ms = 0;        // before every response
  std::int64_t sleep_on_id = -1;    // sleep 10s on this id only
  std::int64_t crash_on_id = -1;    // _exit(3) upon reading this id
  std::int64_t garbage_on_id = -1;  // emit a non-JSON line instead
  std::int64_t fail_on_id = -1;     // respond status=fail
  std::int64_t wrong_keys_on_id = -1;  // ok response with a bogus key
  std::int64_t nan_on_id = -1;         // ok response with non-finite values
  int handshake_version = 1;
  bool no_handshake = false;
  bool garbage_handshake = false;
  bool swap_pairs = false;  // answer every second request before its partner
};

[[noreturn]] void usage(int code) {
  std::cerr
      << "usage: eval_stub [--sleep-ms N] [--sleep-on-id ID]\n"
         "                 [--crash-on-id ID] [--garbage-on-id ID]\n"
         "                 [--fail-on-id ID] [--wrong-keys-on-id ID]\n"
         "                 [--nan-on-id ID] [--handshake-version N]\n"
         "                 [--no-handshake] [--garbage-handshake]\n"
         "                 [--swap-pairs]\n";
  std::exit(code);
}

std::int64_t arg_int(int argc, char** argv, int& i) {
  if (i + 1 >= argc) usage(2);
  return std::strtoll(argv[++i], nullptr, 10);
}

// Deterministic demo objective, mirrored by the conformance tests:
// objective k = (sum over config values) + k + (seed mod 97) / 1000, where a
// numeric value contributes itself and a string contributes its byte sum.
double demo_objective(const json& config, std::size_t k, std::uint64_t seed) {
  double s = 0.0;
  for (const auto& [key, v] : config.items()) {
    (void)key;
    if (v.is_number()) {
      s += v.get<double>();
    } else if (v.is_string()) {
      for (unsigned char c : v.get<std::string>()) s += c;
    }
  }
  return s + static_cast<double>(k) +
         static_cast<double>(seed % 97) / 1000.0;
}

void emit(const json& j) {
  std::cout << j.dump() << "\n" << std::flush;
}

void respond(const json& req, const Flags& f) {
  const std::int64_t id = req.value("id", std::int64_t{0});
  if (f.sleep_ms > 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(f.sleep_ms));
  if (id == f.sleep_on_id)
    std::this_thread::sleep_for(std::chrono::seconds(10));
  if (id == f.garbage_on_id) {
    std::cout << "this is not json\n" << std::flush;
    return;
  }
  if (id == f.fail_on_id) {
    emit({{"id", id}, {"status", "fail"}, {"detail", "synthetic failure"}});
    return;
  }
  if (id == f.wrong_keys_on_id) {
    emit({{"id", id}, {"status", "ok"}, {"objectives", {{"bogus", 1.0}}}});
    return;
  }

  json objectives = json::object();
  const json names = req.value("objective_names", json::array());
  const json config = req.value("config", json::object());
  const auto seed = req.value("seed", std::uint64_t{0});
  for (std::size_t k = 0; k < names.size(); ++k) {
    double v = demo_objective(config, k, seed);
    if (id == f.nan_on_id) v = std::numeric_limits<double>::quiet_NaN();
    objectives[names[k].get<std::string>()] = v;
  }
  emit({{"id", id}, {"status", "ok"}, {"objectives", objectives}});
}

}  // namespace

int main(int argc, char** argv) {
  Flags f;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--sleep-ms") f.sleep_ms = arg_int(argc, argv, i);
    else if (a == "--sleep-on-id") f.sleep_on_id = arg_int(argc, argv, i);
    else if (a == "--crash-on-id") f.crash_on_id = arg_int(argc, argv, i);
    else if (a == "--garbage-on-id") f.garbage_on_id = arg_int(argc, argv, i);
    else if (a == "--fail-on-id") f.fail_on_id = arg_int(argc, argv, i);
    else if (a == "--wrong-keys-on-id")
      f.wrong_keys_on_id = arg_int(argc, argv, i);
    else if (a == "--nan-on-id") f.nan_on_id = arg_int(argc, argv, i);
    else if (a == "--handshake-version")
      f.handshake_version = static_cast<int>(arg_int(argc, argv, i));
    else if (a == "--no-handshake") f.no_handshake = true;
    else if (a == "--garbage-handshake") f.garbage_handshake = true;
    else if (a == "--swap-pairs") f.swap_pairs = true;
    else if (a == "--help" || a == "-h") usage(0);
    else usage(2);
  }

  if (f.garbage_handshake) {
    std::cout << "hello world\n" << std::flush;
  } else if (!f.no_handshake) {
    emit({{"proto", "peakforge-eval"}, {"version", f.handshake_version}});
  }
  std::cerr << "eval_stub: ready\n";

  std::vector<json> held;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    json req = json::parse(line, nullptr, false);
    if (req.is_discarded()) {
      std::cerr << "eval_stub: dropping unparseable request line\n";
      continue;
    }
    if (req.value("id", std::int64_t{0}) == f.crash_on_id) {
      std::cerr << "eval_stub: crashing on request " << f.crash_on_id << "\n";
      std::exit(3);
    }
    if (f.swap_pairs) {
      held.push_back(std::move(req));
      if (held.size() == 2) {
        respond(held[1], f);
        respond(held[0], f);
        held.clear();
      }
      continue;
    }
    respond(req, f);
  }
  for (const json& r : held) respond(r, f);
  return 0;
}
