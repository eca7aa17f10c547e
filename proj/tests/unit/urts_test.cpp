#include <gtest/gtest.h>

#include "ccx/host/urts.hpp"
#include "support/fixtures.hpp"

using namespace ccx;
using namespace ccx::host;

namespace {

class UrtsTest : public ::testing::TestWithParam<SimMode> {
 protected:
  UrtsTest() : m_(testutil::small_config(GetParam())), rt_(m_) {}

  EnclaveId load(const std::string& rel) {
    auto e = rt_.create(testutil::manifest(rel));
    if (!e) ADD_FAILURE() << to_string(e.error());
    return e ? *e : EnclaveId{0};
  }
  std::uint64_t sel(Selector s) { return static_cast<std::uint64_t>(s); }

  Machine m_;
  Runtime rt_;
};

TEST_P(UrtsTest, EchoAndAdd) {
  const EnclaveId e = load("enclave/basic.manifest");
  auto r = rt_.ecall(e, 0, sel(Selector::kEcho), {42});
  ASSERT_TRUE(r.ok()) << to_string(r.status);
  EXPECT_EQ(r.value, 42u);
  r = rt_.ecall(e, 1, sel(Selector::kAdd), {40, 2});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value, 42u);
}

TEST_P(UrtsTest, OcallRoundTrip) {
  const EnclaveId e = load("enclave/basic.manifest");
  auto r = rt_.ecall(e, 0, sel(Selector::kOcall), {kOcallDouble, 20});
  ASSERT_TRUE(r.ok()) << to_string(r.status) << " at " << std::hex << (r.fault ? r.fault->va : 0)
                      << " base " << rt_.handle(e)->base << " steps " << std::dec << r.steps;
  EXPECT_EQ(r.value, 41u);
  EXPECT_EQ(r.ocalls, 1u);
}

TEST_P(UrtsTest, HandleMatchesManifestMeasurement) {
  const auto man = testutil::manifest("enclave/basic.manifest");
  const EnclaveId e = load("enclave/basic.manifest");
  const auto pages = materialize(man);
  ASSERT_TRUE(pages);
  const auto want = ref::mrenclave(man.size, man.ssa_frame_size, testutil::ref_pages(*pages));
  EXPECT_EQ(rt_.handle(e)->mrenclave, want);
}

TEST_P(UrtsTest, SealUnseal) {
  const EnclaveId e = load("enclave/basic.manifest");
  const Bytes payload{'h', 'e', 'l', 'l', 'o'};
  auto blob = rt_.seal(e, kSealPolicyMrEnclave, payload);
  ASSERT_TRUE(blob) << to_string(blob.error());
  auto back = rt_.unseal(e, *blob);
  ASSERT_TRUE(back) << to_string(back.error());
  EXPECT_EQ(*back, payload);
  Bytes bad = *blob;
  bad.back() ^= 1;
  auto r = rt_.unseal(e, bad);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error(), Status::kMacCompareFail);
}

TEST_P(UrtsTest, AttestTwoEnclaves) {
  const EnclaveId a = load("enclave/basic.manifest");
  const EnclaveId b = load("enclave/debug.manifest");
  const AttestResult r = rt_.attest(a, b);
  EXPECT_EQ(r.status, Status::kSuccess);
  EXPECT_TRUE(r.a_verifies_b);
  EXPECT_TRUE(r.b_verifies_a);
  EXPECT_EQ(r.a_sees, rt_.handle(b)->mrenclave);
  EXPECT_EQ(r.b_sees, rt_.handle(a)->mrenclave);
}

TEST_P(UrtsTest, InterruptsAreTransparent) {
  const EnclaveId e = load("enclave/basic.manifest");
  const VirtAddr buf = rt_.handle(e)->base + 0x8000;
  auto clean = rt_.ecall(e, 0, sel(Selector::kCompute), {200, buf, 7});
  ASSERT_TRUE(clean.ok());
  // Reset the buffer and repeat with an interrupt on every step.
  for (int i = 0; i < 8; ++i) rt_.ecall(e, 0, sel(Selector::kWrite64), {buf + 8u * i, 0});
  m_.vcpu(0).irq.every_step = true;
  auto noisy = rt_.ecall(e, 0, sel(Selector::kCompute), {200, buf, 7});
  m_.vcpu(0).irq.every_step = false;
  ASSERT_TRUE(noisy.ok()) << to_string(noisy.status);
  EXPECT_GT(noisy.aex_count, 100u);
  EXPECT_EQ(noisy.value, clean.value);
}

TEST_P(UrtsTest, NotifyHandlerRunsAndCompletes) {
  const EnclaveId e = load("enclave/notify.manifest");
  const VirtAddr buf = rt_.handle(e)->base + 0x8000;
  auto clean = rt_.ecall(e, 0, sel(Selector::kCompute), {50, buf, 3});
  ASSERT_TRUE(clean.ok());
  for (int i = 0; i < 8; ++i) rt_.ecall(e, 0, sel(Selector::kWrite64), {buf + 8u * i, 0});
  m_.inject_interrupt(0);
  auto r = rt_.ecall(e, 0, sel(Selector::kCompute), {50, buf, 3});
  ASSERT_TRUE(r.ok()) << to_string(r.status);
  EXPECT_EQ(r.value, clean.value);
}

TEST_P(UrtsTest, FaultIsReported) {
  const EnclaveId e = load("enclave/basic.manifest");
  auto r = rt_.ecall(e, 0, sel(Selector::kRead64), {0xdead0000});
  EXPECT_FALSE(r.ok());
  ASSERT_TRUE(r.fault.has_value());
}

TEST_P(UrtsTest, ProbeTakesDeniedReadsWithoutCrashing) {
  const EnclaveId a = load("enclave/basic.manifest");
  const EnclaveId b = load("enclave/sibling.manifest");
  const VirtAddr other = rt_.handle(b)->base + 0x8000;
  const std::size_t gpfs = m_.trace().count("gpf");
  for (int i = 0; i < 3; ++i) {
    auto r = rt_.ecall(a, 0, sel(Selector::kProbe), {other});
    ASSERT_TRUE(r.ok()) << to_string(r.status);
    EXPECT_EQ(r.value2, 0u);
    EXPECT_FALSE(r.fault.has_value());
  }
  EXPECT_EQ(m_.trace().count("gpf"), gpfs + 3);

  const VirtAddr own = rt_.handle(a)->base + 0x8000;
  ASSERT_TRUE(rt_.ecall(a, 0, sel(Selector::kWrite64), {own, 77}).ok());
  auto r = rt_.ecall(a, 0, sel(Selector::kProbe), {own});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value2, 1u);
  EXPECT_EQ(r.value, 77u);
}

TEST_P(UrtsTest, UnarmedFaultStillCrashes) {
  const EnclaveId a = load("enclave/basic.manifest");
  const EnclaveId b = load("enclave/sibling.manifest");
  auto r = rt_.ecall(a, 0, sel(Selector::kRead64), {rt_.handle(b)->base + 0x8000});
  ASSERT_TRUE(r.fault.has_value());
  EXPECT_EQ(r.fault->reason, "gpf");
  EXPECT_EQ(rt_.ecall(a, 1, sel(Selector::kEcho)).status, Status::kEnclaveCrashed);
}

TEST_P(UrtsTest, DestroyReturnsGranules) {
  const EnclaveId e = load("enclave/basic.manifest");
  EXPECT_EQ(rt_.destroy(e), Status::kSuccess);
  EXPECT_TRUE(rt_.enclaves().empty());
  const EnclaveId e2 = load("enclave/basic.manifest");
  EXPECT_TRUE(rt_.ecall(e2, 0, sel(Selector::kEcho), {1}).ok());
}

INSTANTIATE_TEST_SUITE_P(Modes, UrtsTest, ::testing::Values(SimMode::kSgx, SimMode::kCcx),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(UrtsSwap, SwapOutThenTouch) {
  Machine m(testutil::small_config(SimMode::kSgx));
  Runtime rt(m);
  auto e = rt.create(testutil::manifest("enclave/basic.manifest"));
  ASSERT_TRUE(e);
  const VirtAddr page = rt.handle(*e)->base + 0x8000;
  ASSERT_TRUE(rt.ecall(*e, 0, static_cast<std::uint64_t>(Selector::kWrite64), {page + 16, 0x1234}).ok());
  ASSERT_EQ(rt.swap().swap_out(*e, page), Status::kSuccess);
  EXPECT_TRUE(rt.swap().swapped(*e, page));
  auto r = rt.ecall(*e, 0, static_cast<std::uint64_t>(Selector::kRead64), {page + 16});
  ASSERT_TRUE(r.ok()) << to_string(r.status);
  EXPECT_EQ(r.value, 0x1234u);
  EXPECT_EQ(r.swap_ins, 1u);
  EXPECT_FALSE(rt.swap().swapped(*e, page));
}

}  // namespace
