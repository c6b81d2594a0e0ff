#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "peakforge/error.hpp"
#include "peakforge/evalproto.hpp"
#include "peakforge/space.hpp"

using namespace peakforge;

namespace {

std::vector<std::string> stub_cmd(std::vector<std::string> extra = {}) {
  std::vector<std::string> cmd{EVAL_STUB_PATH};
  for (auto& a : extra) cmd.push_back(std::move(a));
  return cmd;
}

Configuration demo_config() {
  Configuration c;
  c.space_name = "demo";
  c.values["x"] = 1.5;
  c.values["n"] = std::int64_t{4};
  c.values["tag"] = std::string("ab");
  return c;
}

// Mirrors the stub: numbers contribute themselves, strings their byte sums,
// plus the objective index and (seed mod 97)/1000.
double stub_value(const Configuration& c, std::size_t k, std::uint64_t seed) {
  double s = 0.0;
  for (const auto& [name, v] : c.values) {
    (void)name;
    if (std::holds_alternative<double>(v)) {
      s += std::get<double>(v);
    } else if (std::holds_alternative<std::int64_t>(v)) {
      s += static_cast<double>(std::get<std::int64_t>(v));
    } else {
      for (unsigned char ch : std::get<std::string>(v)) s += ch;
    }
  }
  return s + static_cast<double>(k) + static_cast<double>(seed % 97) / 1000.0;
}

EvalRequest make_req(std::uint64_t id, std::vector<std::string> names,
                     std::uint64_t seed = 7) {
  EvalRequest r;
  r.id = id;
  r.config = demo_config();
  r.objective_names = std::move(names);
  r.seed = seed;
  return r;
}

}  // namespace

TEST_CASE("request serialization keeps value types") {
  const auto j = make_req(3, {"loss"}, 11).to_json();
  CHECK(j["id"] == 3);
  CHECK(j["seed"] == 11);
  CHECK(j["objective_names"] == nlohmann::json::array({"loss"}));
  CHECK(j["config"]["x"].is_number_float());
  CHECK(j["config"]["n"].is_number_integer());
  CHECK(j["config"]["n"] == 4);
  CHECK(j["config"]["tag"] == "ab");
}

TEST_CASE("handshake and a single round trip") {
  Evaluator ev(stub_cmd());
  const auto req = make_req(1, {"loss"});
  const auto resp = ev.evaluate(req);
  CHECK(resp.id == 1);
  CHECK(resp.ok);
  REQUIRE(resp.objectives.count("loss") == 1);
  CHECK(resp.objectives.at("loss") == doctest::Approx(stub_value(req.config, 0, 7)).epsilon(1e-12));
  CHECK(ev.respawn_count() == 0);
  CHECK(ev.in_flight() == 0);
}

TEST_CASE("multiple objectives come back keyed by name") {
  Evaluator ev(stub_cmd());
  const auto req = make_req(5, {"f1", "f2"}, 42);
  const auto resp = ev.evaluate(req);
  REQUIRE(resp.ok);
  CHECK(resp.objectives.at("f1") == doctest::Approx(stub_value(req.config, 0, 42)).epsilon(1e-12));
  CHECK(resp.objectives.at("f2") == doctest::Approx(stub_value(req.config, 1, 42)).epsilon(1e-12));
}

TEST_CASE("spawn failure names the command") {
  CHECK_THROWS_WITH_AS(
      Evaluator({"/nonexistent/evaluator-xyz"}),
      doctest::Contains("failed to start evaluator"), IoError);
}

TEST_CASE("child that exits without a handshake is reported") {
  CHECK_THROWS_WITH_AS(Evaluator({"/bin/false"}),
                       doctest::Contains("before completing the handshake"),
                       ProtocolError);
}

TEST_CASE("garbage handshake error quotes the offending line") {
  CHECK_THROWS_WITH_AS(Evaluator(stub_cmd({"--garbage-handshake"})),
                       doctest::Contains("hello world"), ProtocolError);
}

TEST_CASE("handshake version mismatch is a distinct error") {
  CHECK_THROWS_WITH_AS(Evaluator(stub_cmd({"--handshake-version", "2"})),
                       doctest::Contains("version mismatch"), ProtocolError);
}

TEST_CASE("silent child trips the handshake timeout") {
  Evaluator::Options opt;
  opt.handshake_timeout_s = 0.4;
  CHECK_THROWS_WITH_AS(Evaluator(stub_cmd({"--no-handshake"}), opt),
                       doctest::Contains("handshake timed out"), ProtocolError);
}

TEST_CASE("out-of-order responses are matched by id") {
  Evaluator ev(stub_cmd({"--swap-pairs"}));
  EvalResponse r1, r2;
  std::thread t1([&] { r1 = ev.evaluate(make_req(1, {"loss"})); });
  std::thread t2([&] { r2 = ev.evaluate(make_req(2, {"loss"})); });
  t1.join();
  t2.join();
  REQUIRE(r1.ok);
  REQUIRE(r2.ok);
  CHECK(r1.id == 1);
  CHECK(r2.id == 2);
  CHECK(r1.objectives.at("loss") == doctest::Approx(stub_value(demo_config(), 0, 7)).epsilon(1e-12));
  CHECK(r2.objectives.at("loss") == r1.objectives.at("loss"));
  CHECK(ev.respawn_count() == 0);
}

TEST_CASE("pipelined batch with swapped replies all resolve") {
  Evaluator ev(stub_cmd({"--swap-pairs"}));
  constexpr int kN = 8;
  std::vector<EvalResponse> out(kN);
  std::vector<std::thread> threads;
  for (int i = 0; i < kN; ++i)
    threads.emplace_back([&, i] {
      auto req = make_req(static_cast<std::uint64_t>(i + 1), {"loss"},
                          static_cast<std::uint64_t>(i));
      out[i] = ev.evaluate(req);
    });
  for (auto& t : threads) t.join();
  for (int i = 0; i < kN; ++i) {
    REQUIRE(out[i].ok);
    CHECK(out[i].id == static_cast<std::uint64_t>(i + 1));
    CHECK(out[i].objectives.at("loss") ==
          doctest::Approx(stub_value(demo_config(), 0, i)).epsilon(1e-12));
  }
  CHECK(ev.in_flight() == 0);
}

TEST_CASE("timeout fails the trial, respawns, and the next trial proceeds") {
  Evaluator::Options opt;
  opt.eval_timeout_s = 0.4;
  Evaluator ev(stub_cmd({"--sleep-on-id", "2"}), opt);
  CHECK(ev.evaluate(make_req(1, {"loss"})).ok);

  const auto t0 = std::chrono::steady_clock::now();
  const auto slow = ev.evaluate(make_req(2, {"loss"}));
  const double waited =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  CHECK_FALSE(slow.ok);
  CHECK(slow.detail.find("no response within") != std::string::npos);
  CHECK(waited < 5.0);

  const auto next = ev.evaluate(make_req(3, {"loss"}));
  CHECK(next.ok);
  CHECK(ev.respawn_count() == 1);
}

TEST_CASE("crash kills only in-flight trials and the run continues") {
  Evaluator ev(stub_cmd({"--sleep-ms", "300", "--crash-on-id", "5"}));
  EvalResponse r4, r5, r6;
  std::thread t4([&] { r4 = ev.evaluate(make_req(4, {"loss"})); });
  std::this_thread::sleep_for(std::chrono::milliseconds(80));
  std::thread t5([&] { r5 = ev.evaluate(make_req(5, {"loss"})); });
  std::this_thread::sleep_for(std::chrono::milliseconds(80));
  std::thread t6([&] { r6 = ev.evaluate(make_req(6, {"loss"})); });
  t4.join();
  t5.join();
  t6.join();

  // The child answers 4, then dies reading 5; 6 was pipelined behind it.
  CHECK(r4.ok);
  CHECK_FALSE(r5.ok);
  CHECK(r5.detail.find("exited") != std::string::npos);
  CHECK_FALSE(r6.ok);

  const auto next = ev.evaluate(make_req(7, {"loss"}));
  CHECK(next.ok);
  CHECK(ev.respawn_count() == 1);
  CHECK(ev.in_flight() == 0);
}

TEST_CASE("declared failures pass the child's detail through") {
  Evaluator ev(stub_cmd({"--fail-on-id", "1"}));
  const auto resp = ev.evaluate(make_req(1, {"loss"}));
  CHECK_FALSE(resp.ok);
  CHECK(resp.detail == "synthetic failure");
  CHECK(resp.objectives.empty());
  // A declared failure is a clean exchange; the child stays up.
  CHECK(ev.evaluate(make_req(2, {"loss"})).ok);
  CHECK(ev.respawn_count() == 0);
}

TEST_CASE("unparseable response line fails the trial and quotes it") {
  Evaluator ev(stub_cmd({"--garbage-on-id", "3"}));
  const auto resp = ev.evaluate(make_req(3, {"loss"}));
  CHECK_FALSE(resp.ok);
  CHECK(resp.detail.find("this is not json") != std::string::npos);
  CHECK(ev.evaluate(make_req(4, {"loss"})).ok);
  CHECK(ev.respawn_count() == 1);
}

TEST_CASE("ok response with mismatched objective keys fails that trial only") {
  Evaluator ev(stub_cmd({"--wrong-keys-on-id", "2"}));
  const auto resp = ev.evaluate(make_req(2, {"loss"}));
  CHECK_FALSE(resp.ok);
  CHECK(resp.detail.find("missing objective") != std::string::npos);
  CHECK(ev.evaluate(make_req(3, {"loss"})).ok);
  CHECK(ev.respawn_count() == 0);
}

TEST_CASE("non-finite objective values are rejected") {
  Evaluator ev(stub_cmd({"--nan-on-id", "1"}));
  const auto resp = ev.evaluate(make_req(1, {"loss"}));
  CHECK_FALSE(resp.ok);
  CHECK(resp.detail.find("non-finite") != std::string::npos);
  CHECK(ev.evaluate(make_req(2, {"loss"})).ok);
}

TEST_CASE("duplicate in-flight ids are refused") {
  Evaluator ev(stub_cmd({"--sleep-ms", "400"}));
  std::thread t([&] { ev.evaluate(make_req(9, {"loss"})); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  CHECK_THROWS_AS(ev.evaluate(make_req(9, {"loss"})), ConfigError);
  t.join();
}

TEST_CASE("request ids must be positive") {
  Evaluator ev(stub_cmd());
  CHECK_THROWS_AS(ev.evaluate(make_req(0, {"loss"})), ConfigError);
}

TEST_CASE("every id gets exactly one outcome under churn") {
  Evaluator::Options opt;
  opt.eval_timeout_s = 30.0;
  Evaluator ev(stub_cmd(), opt);
  constexpr int kThreads = 4;
  constexpr int kPerThread = 16;
  std::atomic<int> ok_count{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < kPerThread; ++i) {
        const auto id =
            static_cast<std::uint64_t>(t * kPerThread + i + 1);
        const auto resp = ev.evaluate(make_req(id, {"a", "b"}, id));
        if (resp.ok) {
          CHECK(resp.objectives.at("a") ==
                doctest::Approx(stub_value(demo_config(), 0, id)).epsilon(1e-12));
          CHECK(resp.objectives.at("b") ==
                doctest::Approx(stub_value(demo_config(), 1, id)).epsilon(1e-12));
          ok_count.fetch_add(1);
        }
        CHECK(resp.id == id);
      }
    });
  for (auto& t : threads) t.join();
  CHECK(ok_count.load() == kThreads * kPerThread);
  CHECK(ev.in_flight() == 0);
}

TEST_CASE("independent handles run side by side") {
  Evaluator a(stub_cmd());
  Evaluator b(stub_cmd());
  const auto ra = a.evaluate(make_req(1, {"loss"}, 1));
  const auto rb = b.evaluate(make_req(1, {"loss"}, 2));
  CHECK(ra.ok);
  CHECK(rb.ok);
  CHECK(ra.objectives.at("loss") != rb.objectives.at("loss"));
}
