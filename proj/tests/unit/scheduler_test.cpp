#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ordikit/scheduler.hpp"
#include "ordikit/synth.hpp"
#include "support.hpp"

using namespace ordikit;

namespace {

LabeledItem item(const std::string& id, std::optional<std::string> cat, std::optional<double> d, std::size_t rank) {
  return {id, std::move(cat), d, rank};
}

/// A:[Q1(0.9), Q2(0.1)], B:[Q3(0.5), Q4(0.3)]
std::vector<LabeledItem> four() {
  return {item("Q1", "A", 0.9, 0), item("Q2", "A", 0.1, 1), item("Q3", "B", 0.5, 2), item("Q4", "B", 0.3, 3)};
}

const std::vector<std::string> kAB{"A", "B"};
const std::vector<std::string> kBA{"B", "A"};

using Ids = std::vector<std::string>;

}  // namespace

TEST(WorkedExamples, Curriculum) { EXPECT_EQ(order_curriculum(four()).sequence, (Ids{"Q2", "Q4", "Q3", "Q1"})); }

TEST(WorkedExamples, Blocked) {
  EXPECT_EQ(order_blocked(four(), kAB).sequence, (Ids{"Q1", "Q2", "Q3", "Q4"}));
  EXPECT_EQ(order_blocked(four(), kBA).sequence, (Ids{"Q3", "Q4", "Q1", "Q2"}));
}

TEST(WorkedExamples, Interleaved) { EXPECT_EQ(order_interleaved(four(), kAB).sequence, (Ids{"Q1", "Q3", "Q2", "Q4"})); }

TEST(WorkedExamples, BlockedCurriculum) {
  EXPECT_EQ(order_blocked_curriculum(four(), kAB).sequence, (Ids{"Q2", "Q1", "Q4", "Q3"}));
}

TEST(WorkedExamples, InterleavedCurriculum) {
  EXPECT_EQ(order_interleaved_curriculum(four(), kAB).sequence, (Ids{"Q2", "Q4", "Q1", "Q3"}));
}

TEST(Interleaved, ExhaustedCategoriesAreSkipped) {
  const std::vector<LabeledItem> items{item("Q1", "A", {}, 0), item("Q2", "A", {}, 1), item("Q3", "B", {}, 2),
                                       item("Q5", "A", {}, 3)};
  EXPECT_EQ(order_interleaved(items, kAB).sequence, (Ids{"Q1", "Q3", "Q2", "Q5"}));
}

TEST(Interleaved, ChunkedVisitsTakeSeveralItems) {
  std::vector<LabeledItem> items;
  for (std::size_t i = 0; i < 5; ++i) items.push_back(item("a" + std::to_string(i), "A", {}, i));
  for (std::size_t i = 0; i < 3; ++i) items.push_back(item("b" + std::to_string(i), "B", {}, 5 + i));
  EXPECT_EQ(order_interleaved(items, kAB, 2).sequence, (Ids{"a0", "a1", "b0", "b1", "a2", "a3", "b2", "a4"}));
  EXPECT_ORDIKIT_ERROR(order_interleaved(items, kAB, 0), "bad_chunk_size");
}

TEST(RandomShuffle, IsReproducibleAndSeedSensitive) {
  std::vector<LabeledItem> five;
  for (std::size_t i = 0; i < 5; ++i) five.push_back(item("q" + std::to_string(i + 1), {}, {}, i));
  EXPECT_EQ(order_random_shuffle(five, 42), order_random_shuffle(five, 42));
  const auto hundred = synth::labeled_items(100, 3, 1);
  EXPECT_NE(order_random_shuffle(hundred, 1).sequence, order_random_shuffle(hundred, 2).sequence);
  EXPECT_EQ(order_random_shuffle(std::vector{item("q1", {}, {}, 0)}, 9).sequence, Ids{"q1"});
}

TEST(RandomShuffle, PinnedPermutation) {
  // Freezes the generator: a change here silently reorders every manifest.
  std::vector<LabeledItem> ten;
  for (std::size_t i = 0; i < 10; ++i) ten.push_back(item("q" + std::to_string(i + 1), {}, {}, i));
  EXPECT_EQ(order_random_shuffle(ten, 42).sequence, (Ids{"q2", "q8", "q10", "q1", "q4", "q9", "q5", "q3", "q6", "q7"}));
  EXPECT_EQ(serialize_manifest(order_random_shuffle(ten, 42)), serialize_manifest(order_random_shuffle(ten, 42)));
}

TEST(Curriculum, EqualDifficultiesKeepInputOrder) {
  std::vector<LabeledItem> items;
  for (std::size_t i = 0; i < 6; ++i) items.push_back(item("q" + std::to_string(i), "A", 0.5, i));
  EXPECT_EQ(order_curriculum(items).sequence, (Ids{"q0", "q1", "q2", "q3", "q4", "q5"}));
  EXPECT_EQ(order_blocked_curriculum(items, std::vector<std::string>{"A"}).sequence, order_curriculum(items).sequence);
}

TEST(Degenerate, SingleCategory) {
  auto items = synth::labeled_items(40, 1, 3);
  const std::vector<std::string> only{"cat00"};
  Ids input;
  for (const auto& it : items) input.push_back(it.question_id);
  EXPECT_EQ(order_blocked(items, only).sequence, input);
  EXPECT_EQ(order_interleaved_curriculum(items, only).sequence, order_curriculum(items).sequence);
}

TEST(Errors, MissingLabelsAndBadOrders) {
  const std::vector<LabeledItem> none;
  EXPECT_ORDIKIT_ERROR(order_random_shuffle(none, 1), "empty_dataset");
  const std::vector<LabeledItem> uncategorised{item("q1", {}, 0.2, 0), item("q2", "A", 0.1, 1)};
  EXPECT_ORDIKIT_ERROR(order_blocked(uncategorised, std::vector<std::string>{"A"}), "missing_category");
  const std::vector<LabeledItem> unrated{item("q1", "A", {}, 0)};
  EXPECT_ORDIKIT_ERROR(order_curriculum(unrated), "missing_difficulty");
  EXPECT_ORDIKIT_ERROR(order_blocked(four(), std::vector<std::string>{"A"}), "category_order_mismatch");
  EXPECT_ORDIKIT_ERROR(order_blocked(four(), std::vector<std::string>{"A", "B", "C"}), "category_order_mismatch");
  EXPECT_ORDIKIT_ERROR(order_blocked(four(), std::vector<std::string>{"A", "A", "B"}), "category_order_mismatch");
}

TEST(Repetition, RepeatsEachBlockInPlace) {
  const std::vector<LabeledItem> items{item("Q1", "A", {}, 0), item("Q2", "A", {}, 1), item("Q3", "B", {}, 2)};
  const auto m = order_blocked(items, kAB);
  EXPECT_EQ(apply_repetition(m, 3).sequence, (Ids{"Q1", "Q2", "Q1", "Q2", "Q1", "Q2", "Q3", "Q3", "Q3"}));
  EXPECT_EQ(apply_repetition(m, 3).repeat_within_category, 3);
  EXPECT_EQ(apply_repetition(m, 1), m);
  EXPECT_ORDIKIT_ERROR(apply_repetition(m, 0), "bad_repeat");
}

TEST(Repetition, RejectedForNonBlockedLayouts) {
  EXPECT_ORDIKIT_ERROR(apply_repetition(order_interleaved(four(), kAB), 3), "unsupported_strategy");
  EXPECT_ORDIKIT_ERROR(apply_repetition(order_curriculum(four()), 2), "unsupported_strategy");
  EXPECT_NO_THROW(apply_repetition(order_curriculum(four()), 1));
}

class BankFixture : public ::testing::Test {
 protected:
  std::vector<LabeledItem> items = synth::labeled_items(874, 10, 2024);
  std::vector<std::string> order = default_category_order(items);
};

TEST_F(BankFixture, CurriculumIsNonDecreasing) {
  const auto m = order_curriculum(items);
  EXPECT_TRUE(oracle::violations(m, items).empty());
}

TEST_F(BankFixture, InterleavingAlternatesUntilExhaustion) {
  ASSERT_EQ(order.size(), 10u);
  const auto m = order_interleaved(items, order);
  EXPECT_EQ(oracle::violations(m, items), std::vector<std::string>{});
}

TEST_F(BankFixture, BlockedCurriculumMonotoneInEveryBlock) {
  EXPECT_EQ(oracle::violations(order_blocked_curriculum(items, order), items), std::vector<std::string>{});
}

TEST_F(BankFixture, InterleavedCurriculumMonotonePerCategory) {
  EXPECT_EQ(oracle::violations(order_interleaved_curriculum(items, order), items), std::vector<std::string>{});
}

TEST_F(BankFixture, RepetitionTriplesLength) {
  const auto m = apply_repetition(order_blocked(items, order), 3);
  EXPECT_EQ(m.sequence.size(), 3 * items.size());
  std::map<std::string, int> counts;
  for (const auto& id : m.sequence) ++counts[id];
  for (const auto& [id, c] : counts) EXPECT_EQ(c, 3) << id;
}

TEST(Properties, RandomisedTrialsHoldEveryInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = static_cast<std::size_t>(rng.between(1, 400));
    const auto k = static_cast<std::size_t>(rng.between(1, 12));
    const auto items = synth::labeled_items(n, k, rng.next());
    auto order = default_category_order(items);
    rng.shuffle(order);
    for (Strategy s : kAllStrategies) {
      OrderRequest req{.strategy = s, .seed = rng.next(), .category_order = order};
      const auto m = build_manifest(req, items, "d");
      EXPECT_EQ(oracle::violations(m, items), std::vector<std::string>{}) << to_string(s) << " trial " << trial;
      EXPECT_EQ(serialize_manifest(m), serialize_manifest(build_manifest(req, items, "d")));
    }
  }
}

TEST(Properties, SameCategoryOrderGivesSameSkeleton) {
  const auto a = synth::labeled_items(120, 4, 1);
  auto b = a;
  for (auto& it : b) it.difficulty = 1.0 - *it.difficulty;
  const auto order = default_category_order(a);
  auto skeleton = [](const OrderedManifest& m) { return m.sequence_categories; };
  EXPECT_EQ(skeleton(order_interleaved_curriculum(a, order)), skeleton(order_interleaved_curriculum(b, order)));
  EXPECT_EQ(skeleton(order_blocked_curriculum(a, order)), skeleton(order_blocked_curriculum(b, order)));
}

TEST(Properties, RenamingCategoriesOnlyRenamesTheManifest) {
  auto a = synth::labeled_items(90, 5, 4);
  auto b = a;
  std::map<std::string, std::string> rename;
  for (auto& it : b) {
    const std::string fresh = "z" + std::string(1, static_cast<char>('e' - (it.category->back() - '0')));
    rename[*it.category] = fresh;
    it.category = fresh;
  }
  std::vector<std::string> order_a = default_category_order(a);
  std::vector<std::string> order_b;
  for (const auto& c : order_a) order_b.push_back(rename[c]);
  for (Strategy s : {Strategy::blocked, Strategy::interleaved, Strategy::interleaved_curriculum}) {
    const auto ma = build_manifest({.strategy = s, .category_order = order_a}, a, "d");
    const auto mb = build_manifest({.strategy = s, .category_order = order_b}, b, "d");
    EXPECT_EQ(ma.sequence, mb.sequence) << to_string(s);
  }
}

TEST(ManifestFile, RoundTripsAndVerifies) {
  const auto items = synth::labeled_items(50, 4, 6);
  for (Strategy s : kAllStrategies) {
    OrderRequest req{.strategy = s, .seed = 77};
    if (is_blocked(s)) req.repeat_within_category = 2;
    const auto m = build_manifest(req, items, "abc");
    const std::string text = serialize_manifest(m);
    EXPECT_EQ(parse_manifest(text), m) << to_string(s);
    const auto v = verify_manifest(text, items, "abc");
    EXPECT_TRUE(v.ok) << v.message;
    EXPECT_EQ(parse_manifest(text).seed.has_value(), uses_seed(s));
  }
}

TEST(ManifestFile, TamperedLineIsNamed) {
  const auto items = synth::labeled_items(30, 3, 6);
  const std::string text = serialize_manifest(build_manifest({.strategy = Strategy::interleaved}, items, "abc"));
  auto lines = split_lines(text);
  ASSERT_GT(lines.size(), 8u);
  std::swap(lines[5], lines[8]);
  std::string tampered;
  for (const auto& l : lines) tampered += l + "\n";
  const auto v = verify_manifest(tampered, items, "abc");
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.line, 6u);
}

TEST(ManifestFile, DifferentLabelsOrDatasetFailTheHeader) {
  auto items = synth::labeled_items(30, 3, 6);
  const std::string text = serialize_manifest(build_manifest({.strategy = Strategy::curriculum}, items, "abc"));
  EXPECT_EQ(verify_manifest(text, items, "other").line, 1u);
  items[3].difficulty = 0.123;
  const auto v = verify_manifest(text, items, "abc");
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.line, 1u);
}

TEST(Labels, JoinsDifficultyAndOverridesCategories) {
  const auto ds = synth::dataset({.n_questions = 4, .seed = 1});
  std::vector<DifficultyRecord> diff{{.question_id = "syn002", .difficulty = 0.7}};
  const std::map<std::string, std::string> cats{{"syn001", "cluster_00"}};
  const auto items = make_labeled_items(ds, diff, &cats);
  EXPECT_EQ(items[0].category, "cluster_00");
  EXPECT_FALSE(items[1].category);
  EXPECT_EQ(items[1].difficulty, 0.7);
  EXPECT_FALSE(items[0].difficulty);
  std::vector<DifficultyRecord> stray{{.question_id = "nope"}};
  EXPECT_ORDIKIT_ERROR(make_labeled_items(ds, stray), "unknown_id");
}
