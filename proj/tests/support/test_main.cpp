// Shared main for every test binary. Every Tool built during the run is
// checked against the 2020-12 meta-schema; the tally is written to
// $TOOLREG_AUDIT_DIR/<binary>.json so the acceptance suite can see all runs.

#include <gtest/gtest.h>
#include <unistd.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <mutex>

#include "support/audit.hpp"
#include "toolreg/json_schema.hpp"
#include "toolreg/tool.hpp"

namespace toolreg::test {

namespace {

std::mutex audit_mutex;
ToolAudit audit_state;

void observe(const Tool& tool) {
  auto outcome = schema::validate_against_metaschema(tool.parameters().json());
  std::lock_guard lock(audit_mutex);
  ++audit_state.tools;
  if (!outcome) {
    ++audit_state.failures;
    if (audit_state.failed_names.size() < 20) audit_state.failed_names.push_back(tool.name() + ": " + outcome.summary());
  }
}

class AuditEnvironment : public ::testing::Environment {
 public:
  explicit AuditEnvironment(std::string binary) : binary_(std::move(binary)) {}

  void TearDown() override {
    ToolAudit snapshot = tool_audit();
    std::printf("[schema audit] %s: %llu tools meta-validated, %llu failures\n", binary_.c_str(),
                static_cast<unsigned long long>(snapshot.tools), static_cast<unsigned long long>(snapshot.failures));
    for (const auto& f : snapshot.failed_names) std::printf("[schema audit]   %s\n", f.c_str());
    EXPECT_EQ(snapshot.failures, 0u) << "tools with schemas rejected by the meta-schema";
    if (const char* dir = std::getenv("TOOLREG_AUDIT_DIR"); dir && *dir) {
      std::filesystem::create_directories(dir);
      Json out = {{"binary", binary_},
                  {"tools", snapshot.tools},
                  {"failures", snapshot.failures},
                  {"failed", snapshot.failed_names},
                  {"tests_failed", ::testing::UnitTest::GetInstance()->failed_test_count()}};
      std::ofstream(std::filesystem::path(dir) / (binary_ + ".json")) << out.dump(2) << "\n";
    }
  }

 private:
  std::string binary_;
};

}  // namespace

ToolAudit tool_audit() {
  std::lock_guard lock(audit_mutex);
  return audit_state;
}

}  // namespace toolreg::test

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  ::testing::InitGoogleTest(&argc, argv);
  toolreg::set_tool_observer(toolreg::test::observe);
  std::string binary = std::filesystem::path(argv[0]).filename().string();
  ::testing::AddGlobalTestEnvironment(new toolreg::test::AuditEnvironment(binary));
  return RUN_ALL_TESTS();
}
