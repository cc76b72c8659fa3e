#include <gtest/gtest.h>

#include <random>

#include "auxcal/error.hpp"
#include "auxcal/grading.hpp"
#include "oracles.hpp"

using namespace auxcal;

TEST(RougeL, Examples) {
  EXPECT_DOUBLE_EQ(rouge_l("the cat sat", "the cat sat"), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l("police kill the gunman", "police killed the gunman"), 0.75);
  EXPECT_DOUBLE_EQ(rouge_l("", "anything"), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("anything", ""), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("blue", "red"), 0.0);
}

TEST(RougeL, NormalizesCaseAndPunctuation) {
  EXPECT_DOUBLE_EQ(rouge_l("The  Cat, sat!", "the cat sat"), 1.0);
  EXPECT_EQ(normalize_answer("  Hello,   World!! "), "hello world");
  GradeConfig raw{0.3, false, false};
  EXPECT_EQ(normalize_answer(" A,  b ", raw), "A, b");
}

TEST(RougeL, LcsMatchesRecursiveOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 9), word(0, 3);
  for (int t = 0; t < 300; ++t) {
    std::vector<std::string> a(len(rng)), b(len(rng));
    for (auto& w : a) w = std::string(1, static_cast<char>('a' + word(rng)));
    for (auto& w : b) w = std::string(1, static_cast<char>('a' + word(rng)));
    ASSERT_EQ(lcs_length(a, b), oracle::lcs(a, b));
  }
}

TEST(Grade, Examples) {
  const std::vector<std::string> paris{"Paris"};
  EXPECT_TRUE(grade_answer("The capital is Paris.", paris));
  EXPECT_TRUE(grade_answer("police kill the gunman", std::vector<std::string>{"police killed the gunman"}));
  EXPECT_FALSE(grade_answer("blue", std::vector<std::string>{"red"}));
}

TEST(Grade, ThresholdIsStrict) {
  // candidate 1 of 3 tokens, reference 1 of 5 tokens: F = 2*(1/3)(1/5)/(8/15) = 0.25.
  EXPECT_FALSE(grade_answer("a x y", std::vector<std::string>{"a b c d e"}));
  // F exactly 0.4 with threshold 0.4 is not enough.
  GradeConfig cfg;
  cfg.rouge_threshold = 0.4;
  EXPECT_DOUBLE_EQ(rouge_l("a x y z w", "a b c d e"), 0.2);
  EXPECT_DOUBLE_EQ(rouge_l("a b x y z", "a b c d e"), 0.4);
  EXPECT_FALSE(grade_answer("a b x y z", std::vector<std::string>{"a b c d e"}, cfg));
  cfg.rouge_threshold = 0.39;
  EXPECT_TRUE(grade_answer("a b x y z", std::vector<std::string>{"a b c d e"}, cfg));
}

TEST(Grade, Errors) {
  EXPECT_THROW(grade_answer("x", std::vector<std::string>{}), PreconditionError);
  GradeConfig bad;
  bad.rouge_threshold = 1.0;
  EXPECT_THROW(grade_answer("x", std::vector<std::string>{"x"}, bad), PreconditionError);
}

TEST(Grade, PunctuationOnlyGoldNeverMatchesBySubstring) {
  EXPECT_FALSE(grade_answer("anything", std::vector<std::string>{"?!"}));
}
