#include "isdf/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "isdf/common.hpp"

namespace {

namespace fs = std::filesystem;
using isdf::CsvTable;
using isdf::Matrix;

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("isdf_io_" + std::to_string(::testing::UnitTest::GetInstance()
                                            ->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_text(const std::string& name, const std::string& content) {
    std::ofstream out(path(name), std::ios::binary);
    out << content;
  }

  std::string read_text(const std::string& name) {
    std::ifstream in(path(name), std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  }

  fs::path dir_;
};

TEST_F(IoTest, FormatDoubleRoundTripsExactly) {
  const double values[] = {0.0,
                           -0.0,
                           1.0,
                           -1.5,
                           0.1,
                           1.0 / 3.0,
                           M_PI,
                           1e-308,
                           -1e-308,
                           1.7976931348623157e308,
                           2.2250738585072014e-308,
                           123456789.123456789,
                           -9.87e-15};
  for (double v : values) {
    const std::string s = isdf::format_double(v);
    EXPECT_EQ(isdf::parse_double(s), v) << "text: " << s;
  }
}

TEST_F(IoTest, FormatDoublePrefersShortestForm) {
  EXPECT_EQ(isdf::format_double(0.1), "0.1");
  EXPECT_EQ(isdf::format_double(1.0), "1");
  EXPECT_EQ(isdf::format_double(-2.5), "-2.5");
}

TEST_F(IoTest, NonFiniteValuesRoundTrip) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(isdf::format_double(inf), "inf");
  EXPECT_EQ(isdf::format_double(-inf), "-inf");
  EXPECT_EQ(isdf::format_double(std::nan("")), "nan");
  EXPECT_EQ(isdf::parse_double("inf"), inf);
  EXPECT_EQ(isdf::parse_double("-inf"), -inf);
  EXPECT_TRUE(std::isnan(isdf::parse_double("nan")));
}

TEST_F(IoTest, ParseDoubleRejectsTrailingGarbage) {
  EXPECT_THROW(isdf::parse_double("1.5x"), isdf::IoError);
  EXPECT_THROW(isdf::parse_double(""), isdf::IoError);
  EXPECT_THROW(isdf::parse_double("one"), isdf::IoError);
}

TEST_F(IoTest, WriteReadRoundTripIsExact) {
  Matrix m(3, 2);
  m << 0.1, -1e-308, 1.0 / 3.0, 4.0, std::numeric_limits<double>::infinity(), -0.25;
  isdf::write_csv(path("t.csv"), {"a", "b"}, m);
  const CsvTable t = isdf::read_csv(path("t.csv"));
  ASSERT_EQ(t.headers.size(), 2u);
  EXPECT_EQ(t.headers[0], "a");
  EXPECT_EQ(t.headers[1], "b");
  ASSERT_EQ(t.data.rows(), 3);
  ASSERT_EQ(t.data.cols(), 2);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expect = m(i, j);
      if (std::isnan(expect)) {
        EXPECT_TRUE(std::isnan(t.data(i, j)));
      } else {
        EXPECT_EQ(t.data(i, j), expect) << "cell " << i << "," << j;
      }
    }
  }
}

TEST_F(IoTest, OutputUsesCrlfLineEndings) {
  Matrix m(1, 1);
  m << 2.0;
  isdf::write_csv(path("t.csv"), {"v"}, m);
  const std::string text = read_text("t.csv");
  EXPECT_EQ(text, "v\r\n2\r\n");
}

TEST_F(IoTest, HeadersWithSpecialCharactersAreQuoted) {
  Matrix m(1, 3);
  m << 1.0, 2.0, 3.0;
  isdf::write_csv(path("t.csv"), {"a,b", "say \"hi\"", "line\nbreak"}, m);
  const std::string text = read_text("t.csv");
  EXPECT_NE(text.find("\"a,b\""), std::string::npos);
  EXPECT_NE(text.find("\"say \"\"hi\"\"\""), std::string::npos);
  const CsvTable t = isdf::read_csv(path("t.csv"));
  EXPECT_EQ(t.headers[0], "a,b");
  EXPECT_EQ(t.headers[1], "say \"hi\"");
  EXPECT_EQ(t.headers[2], "line\nbreak");
}

TEST_F(IoTest, ReadsLfOnlyFiles) {
  write_text("t.csv", "x,y\n1,2\n3,4\n");
  const CsvTable t = isdf::read_csv(path("t.csv"));
  ASSERT_EQ(t.data.rows(), 2);
  EXPECT_EQ(t.data(1, 0), 3.0);
  EXPECT_EQ(t.data(1, 1), 4.0);
}

TEST_F(IoTest, ReadsCrlfFiles) {
  write_text("t.csv", "x\r\n1\r\n2\r\n");
  const CsvTable t = isdf::read_csv(path("t.csv"));
  ASSERT_EQ(t.data.rows(), 2);
  EXPECT_EQ(t.data(0, 0), 1.0);
}

TEST_F(IoTest, QuotedCellsWithDelimitersParse) {
  write_text("t.csv", "\"a,b\",c\n\"1\",2\n");
  const CsvTable t = isdf::read_csv(path("t.csv"));
  EXPECT_EQ(t.headers[0], "a,b");
  EXPECT_EQ(t.data(0, 0), 1.0);
}

TEST_F(IoTest, MissingFileThrowsIoError) {
  EXPECT_THROW(isdf::read_csv(path("absent.csv")), isdf::IoError);
}

TEST_F(IoTest, EmptyFileThrowsHeaderError) {
  write_text("t.csv", "");
  EXPECT_THROW(isdf::read_csv(path("t.csv")), isdf::IoError);
}

TEST_F(IoTest, RaggedRowReportsLineNumber) {
  write_text("t.csv", "a,b\n1,2\n3\n");
  try {
    isdf::read_csv(path("t.csv"));
    FAIL() << "expected IoError";
  } catch (const isdf::IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
  }
}

TEST_F(IoTest, NonNumericCellReportsLineNumber) {
  write_text("t.csv", "a\n1\nbogus\n");
  try {
    isdf::read_csv(path("t.csv"));
    FAIL() << "expected IoError";
  } catch (const isdf::IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
  }
}

TEST_F(IoTest, UnterminatedQuoteThrows) {
  write_text("t.csv", "a\n\"1\n");
  EXPECT_THROW(isdf::read_csv(path("t.csv")), isdf::IoError);
}

TEST_F(IoTest, ColumnLookup) {
  Matrix m(1, 2);
  m << 5.0, 6.0;
  isdf::write_csv(path("t.csv"), {"left", "right"}, m);
  const CsvTable t = isdf::read_csv(path("t.csv"));
  EXPECT_EQ(t.column("left"), 0);
  EXPECT_EQ(t.column("right"), 1);
  EXPECT_THROW(t.column("absent"), isdf::LengthMismatch);
}

TEST_F(IoTest, HeaderCountMismatchThrows) {
  Matrix m(1, 2);
  m << 1.0, 2.0;
  EXPECT_THROW(isdf::write_csv(path("t.csv"), {"only_one"}, m),
               isdf::LengthMismatch);
}

}  // namespace
