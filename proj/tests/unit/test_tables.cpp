#include "corpusforge/tables.hpp"

#include <gtest/gtest.h>

#include "support.hpp"

using namespace corpusforge;

TEST(FlattenTable, SmallestPipeTable) { EXPECT_EQ(flatten_table("|a|b|\n|-|-|\n|1|2|"), "a  b\n1  2"); }

TEST(FlattenTable, SingleCell) { EXPECT_EQ(flatten_table("|x|"), "x"); }

TEST(FlattenTable, NonTableInputUnchanged) {
    EXPECT_EQ(flatten_table("just text"), "just text");
    EXPECT_EQ(flatten_table("|a|\nnot a row"), "|a|\nnot a row");
}

TEST(FlattenTable, AlignmentRowsAndEscapedPipes) {
    EXPECT_EQ(flatten_table("| a | b |\n|:--|--:|\n| x \\| y | $|z|$ |"), "a  b\nx \\| y  $|z|$");
}

TEST(FlattenTable, GridTableWithMultilineCells) {
    const std::string grid =
        "+-----+-------+\n"
        "| a   | long  |\n"
        "|     | cell  |\n"
        "+=====+=======+\n"
        "| 1   | 2     |\n"
        "+-----+-------+\n";
    EXPECT_EQ(flatten_table(grid), "a  long cell\n1  2");
}

TEST(FlattenTable, FourByThreeFixtureKeepsInlineMath) {
    const auto input = cftest::read_fixture("tables/pipe_4x3.md");
    const auto expected = cftest::read_fixture("tables/pipe_4x3.expected.txt");
    EXPECT_EQ(flatten_table(input), std::string(text::rtrim(expected)));
}
