#include <gtest/gtest.h>

#include "rig/keyvalue.hpp"

using namespace rig::kv;

TEST(KeyValue, ParsesTrimsAndSkipsComments) {
  const Pairs p = parse("# header\n  a = 1 \n\nb=two # trailing\r\n");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0], (std::pair<std::string, std::string>{"a", "1"}));
  EXPECT_EQ(p[1], (std::pair<std::string, std::string>{"b", "two"}));
}

TEST(KeyValue, FormatRoundTrips) {
  const Pairs p{{"x", "1.5"}, {"name", "eg"}, {"empty", ""}};
  EXPECT_EQ(parse(format(p)), p);
}

TEST(KeyValue, RejectsMalformedLines) {
  EXPECT_THROW(parse("novalue\n"), std::invalid_argument);
  EXPECT_THROW(parse(" = 3\n"), std::invalid_argument);
  EXPECT_THROW(parse("a=1\na=2\n"), std::invalid_argument);
}

TEST(Reader, TypedGettersAndFallbacks) {
  Reader r(parse("d=0.25\nu=42\nb=false\nl=1, 2,3\ns=hi\n"));
  EXPECT_EQ(r.get_double("d", 0), 0.25);
  EXPECT_EQ(r.get_u64("u", 0), 42u);
  EXPECT_FALSE(r.get_bool("b", true));
  EXPECT_EQ(r.get_size_list("l", {}), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(r.get_string("s", ""), "hi");
  EXPECT_EQ(r.get_double("missing", 7.0), 7.0);
  EXPECT_NO_THROW(r.require_all_used());
}

TEST(Reader, RejectsBadValues) {
  Reader r(parse("d=1.5x\nu=-1\nb=yes\n"));
  EXPECT_THROW(r.get_double("d", 0), std::invalid_argument);
  EXPECT_THROW(r.get_u64("u", 0), std::invalid_argument);
  EXPECT_THROW(r.get_bool("b", false), std::invalid_argument);
}

TEST(Reader, UnusedKeyIsReported) {
  Reader r(parse("known=1\ntypo=2\n"));
  r.get_u64("known", 0);
  try {
    r.require_all_used();
    FAIL() << "unused key accepted";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("typo"), std::string::npos);
  }
}
