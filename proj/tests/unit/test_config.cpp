#include <gtest/gtest.h>

#include <fstream>

#include "surfgest/config.hpp"
#include "surfgest/error.hpp"
#include "test_util.hpp"

namespace surfgest {
namespace {

std::string error_of(const std::string& text) {
  try {
    config::parse_pipeline(text, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Document, SectionsCommentsAndLines) {
  auto doc = config::Document::parse("top = 1\n# note\n[a]\n  x = hello world  # trailing\n\n[b]\ny=2\n", "t");
  ASSERT_EQ(doc.items().size(), 3u);
  EXPECT_EQ(doc.items()[0].section, "");
  EXPECT_EQ(doc.items()[1].value, "hello world");
  EXPECT_EQ(doc.items()[1].line, 4u);
  std::string x;
  EXPECT_TRUE(doc.get("a", "x", x));
  int y = 0;
  EXPECT_TRUE(doc.get("b", "y", y));
  EXPECT_EQ(y, 2);
  EXPECT_THROW(doc.reject_unknown(), ConfigError);
  int top = 0;
  doc.get("", "top", top);
  EXPECT_NO_THROW(doc.reject_unknown());
}

TEST(Document, MalformedLinesCarryLineNumbers) {
  try {
    config::Document::parse("[a]\nno equals sign\n", "f.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("f.cfg:2:", 0), 0u);
  }
  EXPECT_THROW(config::Document::parse("[a\n"), ConfigError);
  EXPECT_THROW(config::Document::parse("[a]\nx = 1\nx = 2\n"), ConfigError);
}

TEST(Document, TypedGetters) {
  auto doc = config::Document::parse("[s]\nb = yes\nd = 2.5\nn = -3\nu = 18446744073709551615\nl = a  b c\nbad = 1.5x\n");
  bool b = false;
  double d = 0.0;
  int n = 0;
  std::uint64_t u = 0;
  std::vector<std::string> l;
  EXPECT_TRUE(doc.get("s", "b", b));
  EXPECT_TRUE(b);
  EXPECT_TRUE(doc.get("s", "d", d));
  EXPECT_EQ(d, 2.5);
  EXPECT_TRUE(doc.get("s", "n", n));
  EXPECT_EQ(n, -3);
  EXPECT_TRUE(doc.get("s", "u", u));
  EXPECT_EQ(u, 18446744073709551615ull);
  EXPECT_TRUE(doc.get_list("s", "l", l));
  EXPECT_EQ(l, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_THROW(doc.get("s", "bad", d), ConfigError);
  EXPECT_FALSE(doc.get("s", "missing", d));
}

TEST(Pipeline, UnknownKeyNamedWithLine) {
  const auto msg = error_of("[train]\nepochs = 5\nlearnign_rate = 0.1\n");
  EXPECT_NE(msg.find("run.cfg:3:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("train.learnign_rate"), std::string::npos) << msg;
}

TEST(Pipeline, InvalidValuesNameTheKey) {
  auto msg = error_of("[model]\nkernel = fifteen\n");
  EXPECT_NE(msg.find("run.cfg:2:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("kernel"), std::string::npos) << msg;
  msg = error_of("[preprocess]\nfilter = sometimes\n");
  EXPECT_NE(msg.find("filter"), std::string::npos) << msg;
  msg = error_of("[split]\nmethod = POOLED\n");
  EXPECT_NE(msg.find("method"), std::string::npos) << msg;
  msg = error_of("[train]\nepochs = 0\n");
  EXPECT_NE(msg.find("[train]"), std::string::npos) << msg;
  msg = error_of("[preprocess]\nwindow_ms = 100\ndownsample = 10\n[model]\nblocks = 6\n");
  EXPECT_NE(msg.find("[model]"), std::string::npos) << msg;
}

TEST(Pipeline, DefaultsAndOverrides) {
  const auto c = config::parse_pipeline(
      "[run]\nseed = 7\n[preprocess]\nfilter = window\nband = 300-450\ndownsample = 2\n[split]\nmethod = LOSO\n"
      "gestures = 4\n[search]\nkernel = 9 15\nblocks_width = 4x16 6x32\nbandpass = none 225-375\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(c.synth.synth.seed, 7u);
  EXPECT_EQ(c.preprocess.filter, FilterPlacement::kWindow);
  EXPECT_EQ(c.preprocess.low_cut_hz, 300.0);
  EXPECT_EQ(c.split.method, SplitMethod::kLoso);
  EXPECT_EQ(c.split.gestures, 4u);
  EXPECT_EQ(c.search.space.size(), 2u * 4u * 3u * 2u * 2u * 2u);
  EXPECT_EQ(c.train.epochs, 300u);
}

TEST(Pipeline, CanonicalTextRoundTrip) {
  const auto c = config::parse_pipeline(
      "[synth]\nsnr_db = 7.5\nparticipants = 3\n[detector]\nlockout_ms = 400\nrequire_rearm = false\n"
      "[model]\ndropout = 0.3\n[train]\nlearning_rate = 0.003\n[search]\nwindow_ms = 1250\n");
  const auto text = config::to_text(c);
  const auto back = config::parse_pipeline(text);
  EXPECT_EQ(config::to_text(back), text);
  EXPECT_EQ(back.synth.synth.snr_db, 7.5);
  EXPECT_EQ(back.detector.lockout_ms, 400.0);
  EXPECT_FALSE(back.detector.require_rearm);
  EXPECT_EQ(back.train.learning_rate, 0.003);
}

TEST(SearchSpaceFile, HeaderOptionalAndValidated) {
  const auto a = config::parse_search_space("bandpass = 225-375\ndownsample = 2 5\n");
  EXPECT_EQ(a.size(), 1u * 2u * 3u * 5u * 4u * 2u);
  const auto b = config::parse_search_space("[search]\ndropout = 0.2\n");
  EXPECT_EQ(b.dropout, (std::vector<double>{0.2}));
  EXPECT_THROW(config::parse_search_space("kernel = 8\n"), ConfigError);
  EXPECT_THROW(config::parse_search_space("budget = 3\n"), ConfigError);
  testing::TempDir dir;
  std::ofstream(dir / "s.cfg") << "kernel = 15\n";
  EXPECT_EQ(config::load_search_space(dir / "s.cfg").kernel, (std::vector<std::size_t>{15}));
  EXPECT_THROW(config::load_search_space(dir / "absent.cfg"), IoError);
}

}  // namespace
}  // namespace surfgest
