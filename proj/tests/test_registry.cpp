#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <thread>

#include "toolreg/registry.hpp"

using namespace toolreg;

namespace {

const Json kNoParams = {{"type", "object"}, {"additionalProperties", true}};

/// Tool whose handler returns `tag`, so a lookup can be traced to its origin.
Tool tagged(const std::string& name, int tag, const std::string& description = "") {
  return make_tool(name, description, kNoParams, SyncHandler([tag](const Json&) { return Json(tag); }));
}

int tag_of(const ToolRegistry& r, const std::string& name) {
  auto t = r.get_tool(name);
  if (!t) return -1;
  return run_tool(*t, Json::object()).value().get<int>();
}

Tool add_tool() {
  return make_tool("add", "adds two numbers",
                   Json{{"type", "object"},
                        {"properties", {{"a", {{"type", "number"}}}, {"b", {{"type", "number"}}}}},
                        {"required", {"a", "b"}}},
                   SyncHandler([](const Json& a) { return json_number(a["a"].get<double>() + a["b"].get<double>()); }));
}

std::set<std::string> name_set(const ToolRegistry& r) {
  auto v = r.names();
  return {v.begin(), v.end()};
}

}  // namespace

// --------------------------------------------------------------- register

TEST(Register, LookupReturnsSameTool) {
  ToolRegistry r;
  r.register_tool(add_tool());
  auto t = r.get_tool("add");
  ASSERT_TRUE(t);
  EXPECT_EQ(t->name(), "add");
  EXPECT_EQ(run_tool(*t, {{"a", 1}, {"b", 2}}).value(), 3);
}

TEST(Register, WithNamespace) {
  ToolRegistry r;
  r.register_tool(add_tool(), "calculator");
  EXPECT_TRUE(r.get_tool("calculator.add"));
  EXPECT_FALSE(r.get_tool("add"));
  EXPECT_TRUE(r.sub_registries().count("calculator"));
}

TEST(Register, Duplicate) {
  ToolRegistry r;
  r.register_tool(add_tool());
  EXPECT_THROW(r.register_tool(add_tool()), DuplicateName);
  EXPECT_EQ(r.size(), 1u);
}

TEST(RegisterToolset, NamespaceFromToolsetName) {
  ToolRegistry r;
  Toolset calc{"BaseCalculator", {add_tool(), tagged("subtract", 1)}};
  EXPECT_EQ(r.register_toolset(calc, true), 2u);
  EXPECT_TRUE(r.contains("base_calculator.add"));
  EXPECT_TRUE(r.contains("base_calculator.subtract"));
}

TEST(RegisterToolset, ExplicitNamespaceAndNone) {
  ToolRegistry r;
  EXPECT_EQ(r.register_toolset({"X", {tagged("a", 1)}}, std::string("calc")), 1u);
  EXPECT_EQ(r.register_toolset({"Y", {tagged("a", 2)}}, false), 1u);
  EXPECT_EQ(name_set(r), (std::set<std::string>{"a", "calc.a"}));
}

TEST(RegisterToolset, EmptyToolset) {
  ToolRegistry r;
  EXPECT_EQ(r.register_toolset({"Empty", {}}, false), 0u);
  EXPECT_EQ(r.size(), 0u);
}

TEST(RegisterToolset, AllOrNothing) {
  ToolRegistry r;
  r.register_toolset({"A", {tagged("x", 1), tagged("y", 2)}}, std::string("ns"));
  auto before = name_set(r);
  EXPECT_THROW(r.register_toolset({"B", {tagged("z", 3), tagged("y", 4)}}, std::string("ns")), DuplicateName);
  EXPECT_EQ(name_set(r), before);
  EXPECT_EQ(tag_of(r, "ns.y"), 2);
}

TEST(RegisterToolset, DuplicateInsideToolset) {
  ToolRegistry r;
  EXPECT_THROW(r.register_toolset({"A", {tagged("x", 1), tagged("x", 2)}}, false), DuplicateName);
  EXPECT_EQ(r.size(), 0u);
}

// ------------------------------------------------------------------ reads

TEST(GetTool, AbsentAndBare) {
  ToolRegistry r;
  r.register_tool(add_tool(), "calc");
  EXPECT_FALSE(r.get_tool("nosuch"));
  EXPECT_FALSE(r.get_tool("add"));
  EXPECT_TRUE(r.get_tool("calc.add"));
}

TEST(GetToolsJson, ShapeAndOrder) {
  ToolRegistry r;
  EXPECT_EQ(r.get_tools_json(), Json::array());
  r.register_tool(tagged("zeta", 1, "z"));
  r.register_tool(add_tool());
  Json defs = r.get_tools_json();
  ASSERT_EQ(defs.size(), 2u);
  EXPECT_EQ(defs[0]["function"]["name"], "add");
  EXPECT_EQ(defs[1]["function"]["name"], "zeta");
  EXPECT_EQ(defs[0].dump(),
            R"({"type":"function","function":{"name":"add","description":"adds two numbers","parameters":{"type":"object","properties":{"a":{"type":"number"},"b":{"type":"number"}},"required":["a","b"],"additionalProperties":false}}})");
  Json resp = r.get_tools_json(ApiFormat::openai_response);
  EXPECT_EQ(resp[0]["name"], "add");
  EXPECT_EQ(resp[0]["type"], "function");
}

TEST(GetToolsJson, Deterministic) {
  ToolRegistry r;
  for (int i = 0; i < 20; ++i) r.register_tool(tagged("t" + std::to_string((i * 7) % 20), i));
  EXPECT_EQ(r.get_tools_json().dump(), r.get_tools_json().dump());
}

// -------------------------------------------------------------- separator

TEST(Separator, EmitsAndMapsBack) {
  ToolRegistry r;
  r.register_tool(add_tool(), "calc");
  r.set_separator("-");
  Json defs = r.get_tools_json();
  EXPECT_EQ(defs[0]["function"]["name"], "calc-add");
  Json raw = Json::array({{{"id", "c1"},
                           {"type", "function"},
                           {"function", {{"name", "calc-add"}, {"arguments", R"({"a":2,"b":3})"}}}}});
  Json messages = r.execute_and_recover(raw, ApiFormat::openai_chat_completion);
  ASSERT_EQ(messages.size(), 1u);
  EXPECT_EQ(messages[0]["content"], "5");
  // The registered name keeps working too.
  auto res = r.execute_tool_calls({{"c2", "calc.add", {{"a", 1}, {"b", 1}}}});
  EXPECT_TRUE(res.at("c2").ok());
}

TEST(Separator, RejectsUnknown) {
  ToolRegistry r;
  EXPECT_THROW(r.set_separator("/"), std::invalid_argument);
  for (const char* ok : {".", "-", "_", "__"}) EXPECT_NO_THROW(r.set_separator(ok));
}

// ------------------------------------------------------------------ merge

TEST(Merge, Disjoint) {
  ToolRegistry a, b;
  a.register_tool(tagged("x", 1));
  b.register_tool(tagged("y", 2));
  b.register_tool(tagged("z", 3), "ns");
  a.merge(b);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_TRUE(a.sub_registries().count("ns"));
}

TEST(Merge, KeepExisting) {
  ToolRegistry a, b;
  a.register_tool(tagged("add", 1));
  b.register_tool(tagged("add", 2));
  a.merge(b, true);
  EXPECT_EQ(tag_of(a, "add"), 1);
}

TEST(Merge, Replace) {
  ToolRegistry a, b;
  a.register_tool(tagged("add", 1));
  b.register_tool(tagged("add", 2));
  a.merge(b, false);
  EXPECT_EQ(tag_of(a, "add"), 2);
}

// ---------------------------------------------------------------- spinoff

TEST(Spinoff, Partitions) {
  ToolRegistry r;
  r.register_tool(tagged("add", 1), "calculator");
  r.register_tool(tagged("sub", 2), "calculator");
  r.register_tool(tagged("echo", 3));
  ToolRegistry spun = r.spinoff("calculator");
  EXPECT_EQ(name_set(spun), (std::set<std::string>{"calculator.add", "calculator.sub"}));
  EXPECT_EQ(name_set(r), (std::set<std::string>{"echo"}));
  EXPECT_FALSE(r.sub_registries().count("calculator"));
  EXPECT_EQ(tag_of(spun, "calculator.sub"), 2);
}

TEST(Spinoff, UnknownPrefix) {
  ToolRegistry r;
  r.register_tool(tagged("x", 1));
  EXPECT_THROW(r.spinoff("nosuch"), UnknownPrefix);
}

TEST(Spinoff, RecoversMergedRegistry) {
  ToolRegistry a, b;
  a.register_tool(tagged("x", 1));
  b.register_tool(tagged("y", 2), "p");
  b.register_tool(tagged("z", 3), "p");
  auto b_names = name_set(b);
  a.merge(b);
  EXPECT_EQ(name_set(a.spinoff("p")), b_names);
}

// -------------------------------------------------------- reduce_namespace

TEST(Reduce, StripsPrefix) {
  ToolRegistry r;
  r.register_tool(tagged("add", 1), "calculator");
  r.reduce_namespace("calculator");
  EXPECT_EQ(name_set(r), (std::set<std::string>{"add"}));
  EXPECT_FALSE(r.sub_registries().count("calculator"));
}

TEST(Reduce, Collision) {
  ToolRegistry r;
  r.register_tool(tagged("add", 1), "calculator");
  r.register_tool(tagged("add", 2));
  auto before = name_set(r);
  EXPECT_THROW(r.reduce_namespace("calculator"), CollisionAfterReduce);
  EXPECT_EQ(name_set(r), before);
  EXPECT_EQ(tag_of(r, "calculator.add"), 1);
}

TEST(Reduce, RoundTripsWithRegister) {
  ToolRegistry r;
  r.register_toolset({"Calc", {tagged("add", 1), tagged("sub", 2)}}, std::string("calc"));
  auto original = name_set(r);
  r.reduce_namespace("calc");
  ToolRegistry again;
  for (const auto& n : r.names()) again.register_tool(*r.get_tool(n), "calc");
  EXPECT_EQ(name_set(again), original);
}

// -------------------------------------------------------------- execution

TEST(Execute, SnapshotAllowsConcurrentBatches) {
  ToolRegistry r;
  r.register_tool(add_tool());
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      std::vector<ToolCall> calls;
      for (int i = 0; i < 25; ++i) calls.push_back({"c" + std::to_string(i), "add", {{"a", t}, {"b", i}}});
      auto res = r.execute_tool_calls(calls);
      for (int i = 0; i < 25; ++i) ok += res.at("c" + std::to_string(i)).value() == t + i;
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(ok.load(), 100);
}

TEST(Execute, RecoverKeepsCallOrder) {
  ToolRegistry r;
  r.register_tool(add_tool());
  Json raw = Json::array();
  for (int i = 9; i >= 0; --i) {
    raw.push_back({{"type", "function_call"},
                   {"call_id", "id" + std::to_string(i)},
                   {"name", "add"},
                   {"arguments", Json({{"a", i}, {"b", 0}}).dump()}});
  }
  Json out = r.execute_and_recover(raw, ApiFormat::openai_response);
  ASSERT_EQ(out.size(), 10u);
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(out[k]["call_id"], "id" + std::to_string(9 - k));
    EXPECT_EQ(out[k]["output"], std::to_string(9 - k));
  }
}

TEST(Lifetime, AttachedResourceSharedAcrossMerge) {
  auto released = std::make_shared<std::atomic<int>>(0);
  {
    ToolRegistry b;
    {
      ToolRegistry a;
      a.attach(std::shared_ptr<void>(new int(1), [released](void* p) {
        delete static_cast<int*>(p);
        ++*released;
      }));
      b.merge(a);
    }
    EXPECT_EQ(released->load(), 0);
  }
  EXPECT_EQ(released->load(), 1);
}

TEST(Lifetime, CloseReleases) {
  auto released = std::make_shared<std::atomic<int>>(0);
  ToolRegistry a;
  a.attach(std::shared_ptr<void>(new int(1), [released](void* p) {
    delete static_cast<int*>(p);
    ++*released;
  }));
  a.close();
  EXPECT_EQ(released->load(), 1);
}

// ------------------------------------------------------------ properties

namespace {

/// Reference model of a registry: name -> tag, plus the namespaces merges
/// brought in.
struct Model {
  std::map<std::string, int> tools;
  std::set<std::string> merged_prefixes;
};

struct Fixture {
  std::mt19937_64 rng;
  int next_tag = 0;

  explicit Fixture(std::uint64_t seed) : rng(seed) {}

  int pick(int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }
  std::string bare() {
    static const char* names[] = {"add", "sub", "mul", "echo", "x"};
    return names[pick(5)];
  }
  std::string ns() {
    static const char* spaces[] = {"calc", "math", "io"};
    return spaces[pick(3)];
  }
  std::string name() { return pick(3) == 0 ? ns() + "." + bare() : bare(); }

  /// Random registry and its model.
  std::pair<ToolRegistry, Model> registry(int max_tools) {
    ToolRegistry r;
    Model m;
    for (int i = 0, n = pick(max_tools + 1); i < n; ++i) {
      std::string nm = name();
      if (m.tools.count(nm)) continue;
      int tag = next_tag++;
      r.register_tool(tagged(nm, tag));
      m.tools[nm] = tag;
    }
    return {std::move(r), std::move(m)};
  }
};

std::string first_segment(const std::string& name) { return name.substr(0, name.find('.')); }

void check_coherent(const ToolRegistry& r, const Model& m, const std::string& where) {
  ASSERT_EQ(r.size(), m.tools.size()) << where;
  std::set<std::string> segments;
  for (const auto& n : r.names()) {
    auto t = r.get_tool(n);
    ASSERT_TRUE(t) << where;
    ASSERT_EQ(t->name(), n) << where << ": key/name mismatch";
    ASSERT_TRUE(m.tools.count(n)) << where << ": unexpected " << n;
    ASSERT_EQ(tag_of(r, n), m.tools.at(n)) << where << ": wrong tool under " << n;
    if (n.find('.') != std::string::npos) segments.insert(first_segment(n));
  }
  for (const auto& s : r.sub_registries()) {
    ASSERT_TRUE(segments.count(s) || m.merged_prefixes.count(s)) << where << ": stray sub-registry " << s;
  }
}

}  // namespace

TEST(RegistryProperties, RandomOperationSequencesMatchModel) {
  Fixture f(424242);
  int cases = 0;
  for (int c = 0; c < 1000; ++c, ++cases) {
    auto [r, m] = f.registry(4);
    for (int step = 0; step < 12; ++step) {
      int op = f.pick(6);
      std::string where = "case " + std::to_string(c) + " step " + std::to_string(step) + " op " + std::to_string(op);
      if (op == 0) {  // register, maybe namespaced
        std::string nm = f.name();
        std::optional<std::string> ns;
        if (f.pick(2)) ns = f.ns();
        std::string final_name = ns && nm.find('.') == std::string::npos ? *ns + "." + nm : nm;
        int tag = f.next_tag++;
        if (m.tools.count(final_name)) {
          EXPECT_THROW(r.register_tool(tagged(nm, tag), ns), DuplicateName) << where;
        } else {
          r.register_tool(tagged(nm, tag), ns);
          m.tools[final_name] = tag;
        }
      } else if (op == 1) {  // toolset, all or nothing
        std::string ns = f.ns();
        std::vector<Tool> tools;
        std::map<std::string, int> adds;
        bool clash = false;
        for (int i = 0, n = 1 + f.pick(3); i < n; ++i) {
          std::string b = f.bare();
          int tag = f.next_tag++;
          tools.push_back(tagged(b, tag));
          std::string final_name = ns + "." + b;
          clash = clash || adds.count(final_name) || m.tools.count(final_name);
          adds[final_name] = tag;
        }
        if (clash) {
          EXPECT_THROW(r.register_toolset({"T", tools}, ns), DuplicateName) << where;
        } else {
          EXPECT_EQ(r.register_toolset({"T", tools}, ns), tools.size()) << where;
          m.tools.insert(adds.begin(), adds.end());
        }
      } else if (op == 2) {  // merge
        auto [src, sm] = f.registry(4);
        bool keep = f.pick(2);
        for (const auto& s : src.sub_registries()) m.merged_prefixes.insert(s);
        r.merge(src, keep);
        for (const auto& [n, tag] : sm.tools) {
          if (!keep || !m.tools.count(n)) m.tools[n] = tag;
        }
      } else if (op == 3) {  // spinoff
        std::string p = f.ns();
        Model spun;
        for (auto it = m.tools.begin(); it != m.tools.end();) {
          if (it->first.rfind(p + ".", 0) == 0) {
            spun.tools.insert(*it);
            it = m.tools.erase(it);
          } else {
            ++it;
          }
        }
        std::size_t before = r.size();
        if (spun.tools.empty()) {
          EXPECT_THROW(r.spinoff(p), UnknownPrefix) << where;
        } else {
          ToolRegistry out = r.spinoff(p);
          EXPECT_EQ(r.size() + out.size(), before) << where;
          EXPECT_FALSE(r.sub_registries().count(p)) << where;
          m.merged_prefixes.erase(p);
          spun.merged_prefixes = m.merged_prefixes;
          check_coherent(out, spun, where + " (spun)");
        }
      } else if (op == 4) {  // reduce_namespace
        std::string p = f.ns();
        std::map<std::string, int> next;
        bool collision = false;
        for (const auto& [n, tag] : m.tools) {
          std::string renamed = n.rfind(p + ".", 0) == 0 ? n.substr(p.size() + 1) : n;
          collision = collision || next.count(renamed);
          next[renamed] = tag;
        }
        std::size_t before = r.size();
        if (collision) {
          EXPECT_THROW(r.reduce_namespace(p), CollisionAfterReduce) << where;
        } else {
          r.reduce_namespace(p);
          m.tools = next;
          m.merged_prefixes.erase(p);
          EXPECT_EQ(r.size(), before) << where;
          EXPECT_FALSE(r.sub_registries().count(p)) << where;
        }
      } else {  // get_tools_json round trip
        std::set<std::string> emitted;
        for (const auto& d : r.get_tools_json()) emitted.insert(d["function"]["name"].get<std::string>());
        EXPECT_EQ(emitted, name_set(r)) << where;
      }
      check_coherent(r, m, where);
      if (::testing::Test::HasFatalFailure()) return;
    }
  }
  EXPECT_GE(cases, 1000);
  ::testing::Test::RecordProperty("cases", cases);
}

TEST(RegistryProperties, MergeSpinoffDuality) {
  Fixture f(777);
  for (int c = 0; c < 1000; ++c) {
    auto [a, am] = f.registry(5);
    std::string p = "p" + std::to_string(f.pick(3));
    // Keep A clear of prefix p so the two are disjoint.
    for (const auto& n : a.names()) {
      if (n.rfind(p + ".", 0) == 0) a.spinoff(p);
    }
    ToolRegistry b;
    for (int i = 0, n = 1 + f.pick(4); i < n; ++i) {
      std::string nm = p + "." + f.bare();
      if (!b.contains(nm)) b.register_tool(tagged(f.bare(), f.next_tag++).with_name(nm));
    }
    auto b_names = name_set(b);
    auto a_names = name_set(a);
    a.merge(b);
    ToolRegistry spun = a.spinoff(p);
    ASSERT_EQ(name_set(spun), b_names) << "case " << c;
    ASSERT_EQ(name_set(a), a_names) << "case " << c;
  }
  ::testing::Test::RecordProperty("cases", 1000);
}

TEST(RegistryProperties, ReduceConservesCountAndTools) {
  Fixture f(31337);
  for (int c = 0; c < 1000; ++c) {
    auto [r, m] = f.registry(6);
    std::string p = f.ns();
    std::map<int, std::string> by_tag;
    for (const auto& [n, tag] : m.tools) by_tag[tag] = n;
    std::size_t before = r.size();
    try {
      r.reduce_namespace(p);
    } catch (const CollisionAfterReduce&) {
      ASSERT_EQ(name_set(r).size(), before);
      continue;
    }
    ASSERT_EQ(r.size(), before);
    for (const auto& [tag, old] : by_tag) {
      std::string expect = old.rfind(p + ".", 0) == 0 ? old.substr(p.size() + 1) : old;
      ASSERT_EQ(tag_of(r, expect), tag) << "case " << c;
    }
  }
  ::testing::Test::RecordProperty("cases", 1000);
}
