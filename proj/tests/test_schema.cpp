#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support/schema_gen.hpp"
#include "toolreg/json_schema.hpp"
#include "toolreg/tool.hpp"

using namespace toolreg;

namespace {

struct Pair {
  std::size_t schema;
  Json instance;
};

struct Corpus {
  std::vector<ParameterSchema> schemas;
  std::vector<Pair> pairs;
};

Corpus build_corpus(std::uint64_t seed, std::size_t n_schemas, std::size_t per_schema) {
  test::SchemaGen gen(seed);
  Corpus c;
  while (c.schemas.size() < n_schemas) {
    Json s = gen.object_schema();
    c.schemas.push_back(ParameterSchema::from_json(s));
    for (std::size_t k = 0; k < per_schema; ++k) {
      c.pairs.push_back({c.schemas.size() - 1, gen.instance(c.schemas.back().json())});
    }
  }
  return c;
}

bool ours_accepts(const ParameterSchema& s, const Json& instance) {
  try {
    validate_arguments(s, instance);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

std::string python_oracle_script() { return std::string(TOOLREG_SOURCE_DIR) + "/tests/oracles/jsonschema_oracle.py"; }

bool python_jsonschema_available() {
  return std::system("python3 -c 'import jsonschema' >/dev/null 2>&1") == 0;
}

std::string run_capture(const std::string& command) {
  std::string out;
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) return out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  ::pclose(pipe);
  return out;
}

}  // namespace

TEST(Soundness, AgreesWithGeneralEvaluatorOver1200Pairs) {
  Corpus c = build_corpus(1234, 200, 6);
  ASSERT_GE(c.pairs.size(), 1000u);
  std::vector<schema::Validator> reference;
  for (const auto& s : c.schemas) reference.emplace_back(s.json());

  std::size_t accepted = 0, disagreements = 0;
  for (const auto& p : c.pairs) {
    bool ours = ours_accepts(c.schemas[p.schema], p.instance);
    bool theirs = reference[p.schema].validate(p.instance).valid;
    accepted += ours;
    if (ours != theirs) {
      ++disagreements;
      ADD_FAILURE() << "schema " << c.schemas[p.schema].json().dump() << "\ninstance " << p.instance.dump()
                    << "\nours=" << ours << " reference=" << theirs;
      if (disagreements > 5) break;
    }
  }
  EXPECT_EQ(disagreements, 0u);
  // The corpus has to exercise both outcomes to mean anything.
  EXPECT_GT(accepted, c.pairs.size() / 5);
  EXPECT_LT(accepted, c.pairs.size() * 4 / 5);
}

TEST(Soundness, AgreesWithPythonJsonschemaOver1200Pairs) {
  if (!python_jsonschema_available()) GTEST_SKIP() << "python3 with jsonschema not available";
  Corpus c = build_corpus(1234, 200, 6);
  Json doc = {{"schemas", Json::array()}, {"pairs", Json::array()}};
  for (const auto& s : c.schemas) doc["schemas"].push_back(s.json());
  for (const auto& p : c.pairs) doc["pairs"].push_back({p.schema, p.instance});
  auto path = std::filesystem::temp_directory_path() / ("toolreg_corpus_" + std::to_string(::getpid()) + ".json");
  std::ofstream(path) << doc.dump();
  Json verdicts = Json::parse(run_capture("python3 " + python_oracle_script() + " " + path.string()), nullptr, false);
  std::filesystem::remove(path);
  ASSERT_TRUE(verdicts.is_array()) << "oracle produced no verdicts";
  ASSERT_EQ(verdicts.size(), c.pairs.size());

  std::size_t disagreements = 0;
  for (std::size_t i = 0; i < c.pairs.size(); ++i) {
    bool ours = ours_accepts(c.schemas[c.pairs[i].schema], c.pairs[i].instance);
    if (ours != verdicts[i].get<bool>()) {
      ++disagreements;
      if (disagreements <= 5) {
        ADD_FAILURE() << "schema " << c.schemas[c.pairs[i].schema].json().dump() << "\ninstance "
                      << c.pairs[i].instance.dump() << "\nours=" << ours << " python=" << verdicts[i];
      }
    }
  }
  EXPECT_EQ(disagreements, 0u);
}

TEST(Soundness, SecondSeedAgainstEvaluator) {
  Corpus c = build_corpus(77, 150, 8);
  std::vector<schema::Validator> reference;
  for (const auto& s : c.schemas) reference.emplace_back(s.json());
  std::size_t disagreements = 0;
  for (const auto& p : c.pairs) {
    disagreements += ours_accepts(c.schemas[p.schema], p.instance) != reference[p.schema].validate(p.instance).valid;
  }
  EXPECT_EQ(disagreements, 0u);
}

TEST(MetaSchema, GeneratedSchemasAreValid) {
  test::SchemaGen gen(5);
  for (int i = 0; i < 300; ++i) {
    Json s = gen.object_schema();
    auto outcome = schema::validate_against_metaschema(s);
    EXPECT_TRUE(outcome.valid) << s.dump() << " " << outcome.summary();
  }
}

TEST(MetaSchema, RejectsMalformedKeywords) {
  for (const Json& bad : {Json{{"type", 5}}, Json{{"required", "a"}}, Json{{"properties", {{"a", 3}}}},
                          Json{{"minLength", -1}}, Json{{"enum", Json::object()}}, Json{{"anyOf", Json::array()}},
                          Json{{"items", "x"}}, Json{{"pattern", 7}}}) {
    EXPECT_FALSE(schema::validate_against_metaschema(bad).valid) << bad.dump();
  }
}

TEST(MetaSchema, AcceptsBooleanAndEmptySchemas) {
  EXPECT_TRUE(schema::validate_against_metaschema(true).valid);
  EXPECT_TRUE(schema::validate_against_metaschema(Json::object()).valid);
  EXPECT_TRUE(schema::validate_against_metaschema({{"$defs", {{"x", {{"type", "string"}}}}}, {"$ref", "#/$defs/x"}}).valid);
}

TEST(Evaluator, ResolvesLocalRefs) {
  schema::Validator v({{"$defs", {{"pos", {{"type", "integer"}, {"minimum", 1}}}}},
                       {"type", "array"},
                       {"items", {{"$ref", "#/$defs/pos"}}}});
  EXPECT_TRUE(v.validate(Json::array({1, 2})).valid);
  EXPECT_FALSE(v.validate(Json::array({1, 0})).valid);
}

TEST(Evaluator, RecursiveRef) {
  schema::Validator v({{"type", "object"},
                       {"properties", {{"children", {{"type", "array"}, {"items", {{"$ref", "#"}}}}}}},
                       {"additionalProperties", false}});
  EXPECT_TRUE(v.validate({{"children", Json::array({{{"children", Json::array()}}})}}).valid);
  EXPECT_FALSE(v.validate({{"children", Json::array({{{"x", 1}}})}}).valid);
}

TEST(Evaluator, ErrorPaths) {
  schema::Validator v(Json{{"properties", {{"a", {{"type", "string"}}}}}});
  auto out = v.validate({{"a", 1}});
  ASSERT_FALSE(out.valid);
  EXPECT_EQ(out.errors.front().instance_path, "/a");
}

TEST(Validation, NestedPathReported) {
  ParameterSchema s = ParameterSchema::from_json(
      {{"type", "object"}, {"properties", {{"xs", {{"type", "array"}, {"items", {{"type", "object"}, {"properties", {{"v", {{"type", "integer"}}}}}}}}}}}});
  try {
    validate_arguments(s, {{"xs", Json::array({{{"v", 1}}, {{"v", "no"}}})}});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.path(), "xs[1].v");
    EXPECT_EQ(e.expected(), "integer");
  }
}

TEST(Validation, CombinatorsAndNot) {
  Json one = {{"oneOf", Json::array({{{"type", "integer"}}, {{"minimum", 0}}})}};
  Json neg = {{"not", {{"type", "string"}}}};
  ParameterSchema s = ParameterSchema::from_json({{"type", "object"}, {"properties", {{"one", one}, {"neg", neg}}}});
  EXPECT_NO_THROW(validate_arguments(s, {{"one", -1}}));
  EXPECT_THROW(validate_arguments(s, {{"one", 2}}), ValidationError);  // matches both
  EXPECT_NO_THROW(validate_arguments(s, {{"one", 0.5}}));
  EXPECT_THROW(validate_arguments(s, {{"neg", "s"}}), ValidationError);
}
