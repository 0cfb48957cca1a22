#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gram/data/dataset.hpp"
#include "gram/data/synthetic.hpp"
#include "gram/io/vision_store.hpp"

using namespace gram;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gram_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<std::string> W(std::string_view s) { return split_words(s); }

std::vector<TopicPhrase> phrases(std::initializer_list<const char*> list) {
  std::vector<TopicPhrase> out;
  for (auto p : list) out.push_back(TopicPhrase::parse(p));
  return out;
}

}  // namespace

TEST_CASE("vocab build") {
  std::vector<std::string> corpus{"a a b"};
  auto v = Vocab::build(corpus, 10);
  CHECK(v.size() == 6);
  CHECK(v.word(kPadId) == "<pad>");
  CHECK(v.word(kBosId) == "<s>");
  CHECK(v.word(kEosId) == "</s>");
  CHECK(v.word(kUnkId) == "<unk>");
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  CHECK(v.id("zebra") == kUnkId);
  CHECK(Vocab::build(corpus, 10) == v);
  CHECK_THROWS_AS(Vocab::build(corpus, 4), std::invalid_argument);
  CHECK_THROWS_AS(Vocab::build({}, 10), std::invalid_argument);

  std::vector<std::string> ties{"d c b a", "c", "d"};
  auto t = Vocab::build(ties, 6);
  CHECK(t.words(std::vector<TokenId>{4, 5}) == W("c d"));

  auto path = temp_path("vocab.txt");
  v.save(path);
  CHECK(Vocab::load(path) == v);
}

TEST_CASE("raw tokenization splits punctuation") {
  CHECK(tokenize_raw("Get away from the float!") == W("Get away from the float !"));
  CHECK(tokenize_raw("a, <unk> b.") == W("a , <unk> b ."));
}

TEST_CASE("mask_source") {
  auto rc = phrases({"red car"});
  auto m = mask_source(W("a red car on the road"), rc);
  CHECK(m.tokens == W("a <unk> on the road"));
  CHECK(m.matches == 1);

  auto none = mask_source(W("a blue bus"), rc);
  CHECK(none.tokens == W("a blue bus"));
  CHECK(none.matches == 0);

  auto two = mask_source(W("red car car"), phrases({"red car", "car"}));
  CHECK(two.tokens == W("<unk> <unk>"));
  CHECK(two.matches == 2);

  // longest wins over a shorter prefix phrase
  auto longest = mask_source(W("a red car"), phrases({"red", "red car"}));
  CHECK(longest.tokens == W("a <unk>"));

  auto cased = mask_source(W("A Red Car"), rc);
  CHECK(cased.tokens == W("A <unk>"));
  auto kept = mask_source(W("Red bus"), phrases({"car"}));
  CHECK(kept.tokens == W("Red bus"));

  auto again = mask_source(m.tokens, rc);
  CHECK(again.tokens == m.tokens);

  CHECK_THROWS_AS(TopicPhrase::parse("red <unk>"), std::invalid_argument);
  CHECK_THROWS_AS(TopicPhrase::parse("  "), std::invalid_argument);
}

TEST_CASE("collate_pretrain counts") {
  std::vector<TextTriplet> captions{
      {W("a red car on the road"), W("ein rotes auto"), {"img1"}},
      {W("a dog runs"), W("ein hund rennt"), {"img2"}},
      {W("two people"), W("zwei leute"), {"img3"}},
  };
  std::vector<TextTriplet> text{{W("hello"), W("hallo"), {}}, {W("thanks"), W("danke"), {}}};
  std::vector<std::string> lines;
  for (auto* set : {&captions, &text})
    for (auto& t : *set) {
      lines.push_back(fmt::format("{}", fmt::join(t.src, " ")));
      lines.push_back(fmt::format("{}", fmt::join(t.tgt, " ")));
    }
  auto vocab = std::make_shared<const Vocab>(Vocab::build(lines, 1000));
  auto d = collate_pretrain(vocab, captions, phrases({"red car"}), text);
  CHECK(d.stats == CollationStats{1, 3, 0, 2, 6});
  CHECK(d.size() == 6);
  CHECK(tally(d) == d.stats);
  CHECK(vocab->decode(d.records[0].src) == "a <unk> on the road");
  CHECK(d.records[1].src == std::vector<TokenId>{kUnkId});
  CHECK(d.records[4].image_ids.empty());

  auto no_phrases = collate_pretrain(vocab, captions, {}, text);
  CHECK(no_phrases.stats.masked == 0);
  CHECK(no_phrases.stats.fully_masked == 3);

  auto no_text = collate_pretrain(vocab, captions, phrases({"red car"}), {});
  CHECK(no_text.stats.total == 4);

  io::VisionEncodingStore store(2);
  store.add("img1", std::vector<float>{0, 1});
  store.add("img2", std::vector<float>{1, 0});
  CHECK_THROWS_WITH_AS(collate_pretrain(vocab, captions, {}, text, &store), "missing image id 'img3'",
                       io::MissingImageError);
}

TEST_CASE("collate_finetune and concat") {
  std::vector<TextTriplet> in;
  for (int i = 0; i < 29; ++i) in.push_back({W(i % 3 ? "a red car" : "a dog"), W("x y"), {fmt::format("i{}", i)}});
  auto vocab = std::make_shared<const Vocab>(Vocab::build(std::vector<std::string>{"a red car dog x y"}, 100));
  auto base = make_dataset(vocab, in);
  auto plain = collate_finetune(base, false, phrases({"red car"}));
  CHECK(plain.size() == 58);
  for (std::size_t i = 0; i < 29; ++i) {
    CHECK(plain.records[i] == base.records[i]);
    CHECK(plain.records[29 + i].image_ids.empty());
    CHECK(plain.records[29 + i].src == base.records[i].src);
  }
  auto masked = collate_finetune(base, true, phrases({"red car"}));
  CHECK(masked.size() == 58);
  CHECK(vocab->decode(masked.records[0].src) == "a dog");
  CHECK(vocab->decode(masked.records[1].src) == "a <unk>");
  CHECK(masked.stats.text_only == 29);
  CHECK(masked.stats.image_bearing() == 29);

  auto joined = concat_datasets(plain, masked);
  CHECK(joined.size() == 116);
  CHECK(joined.stats.total == plain.stats.total + masked.stats.total);
  CHECK(joined.stats.text_only == 58);
  Dataset empty{vocab, {}, {}};
  auto same = concat_datasets(plain, empty);
  CHECK(same.records == plain.records);
  auto other = std::make_shared<const Vocab>(Vocab::build(std::vector<std::string>{"q"}, 10));
  CHECK_THROWS_AS(concat_datasets(plain, Dataset{other, {}, {}}), std::invalid_argument);
}

TEST_CASE("triplet jsonl round trip") {
  auto vocab = std::make_shared<const Vocab>(Vocab::build(std::vector<std::string>{"a b c <unk>"}, 100));
  Dataset d = make_dataset(vocab, std::vector<TextTriplet>{{W("a b"), W("c"), {"x", "y"}}, {W("<unk>"), W("a"), {}}});
  auto path = temp_path("triplets.jsonl");
  write_triplets(d, path);
  auto back = read_triplets(path, vocab);
  CHECK(back.records == d.records);

  std::ofstream(temp_path("empty.jsonl")).close();
  CHECK(read_triplets(temp_path("empty.jsonl"), vocab).empty());

  {
    std::ofstream out(temp_path("bad.jsonl"));
    out << R"({"src": "a", "tgt": "b"})" << "\n" << R"({"src": "a", "tgt": "b)" << "\n";
  }
  CHECK_THROWS_WITH(read_triplets(temp_path("bad.jsonl"), vocab), doctest::Contains("bad.jsonl:2:"));
  {
    std::ofstream out(temp_path("raw.jsonl"));
    out << R"({"src": "Hello, world!", "tgt": "Hallo"})" << "\n";
  }
  CHECK(read_text_triplets(temp_path("raw.jsonl"), true)[0].src == W("Hello , world !"));
  CHECK(read_text_triplets(temp_path("raw.jsonl"), false)[0].src == W("Hello, world!"));
}

TEST_CASE("vision store") {
  io::VisionEncodingStore store(3);
  store.add("a", std::vector<float>{1.0f, -2.5f, 3.25e-7f});
  store.add("b", std::vector<float>{0.1f, 0.2f, 0.3f});
  store.add("c", std::vector<float>{-0.0f, 1e30f, 7.0f});
  auto path = temp_path("store.bin");
  io::store_write(store, path);
  auto back = io::store_read(path);
  CHECK(back == store);
  CHECK(io::store_lookup(back, "c")[1] == 1e30f);
  CHECK_THROWS_WITH_AS(back.lookup("zzz"), "missing image id 'zzz'", io::MissingImageError);
  CHECK_THROWS_AS(store.add("a", std::vector<float>{0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(store.add("d", std::vector<float>{0, 0}), std::invalid_argument);

  io::VisionEncodingStore empty(5);
  io::store_write(empty, temp_path("empty.bin"));
  auto e = io::store_read(temp_path("empty.bin"));
  CHECK(e.size() == 0);
  CHECK(e.dim() == 5);

  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() - 12] ^= 1;
  {
    std::ofstream out(temp_path("corrupt.bin"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH(io::store_read(temp_path("corrupt.bin")), doctest::Contains("checksum"));
}

TEST_CASE("synthetic grounded corpus") {
  auto a = generate_synthetic_grounded_corpus(7, 200);
  auto b = generate_synthetic_grounded_corpus(7, 200);
  CHECK(a.masked.records == b.masked.records);
  CHECK(a.control.records == b.control.records);
  CHECK(a.store == b.store);
  auto c = generate_synthetic_grounded_corpus(8, 200);
  CHECK(c.masked.records != a.masked.records);

  std::vector<std::size_t> seen(8, 0);
  for (std::size_t i = 0; i < a.masked.size(); ++i) {
    const auto& m = a.masked.records[i];
    const auto& ctl = a.control.records[i];
    const auto pos = a.hidden_position[i];
    CHECK(m.src[pos] == kUnkId);
    CHECK(std::count(m.src.begin(), m.src.end(), kUnkId) == 1);
    CHECK(m.tgt == ctl.tgt);
    CHECK(m.tgt[pos] == a.hidden_token[i]);
    CHECK(a.vocab->word(ctl.src[pos]) == "k" + a.vocab->word(a.hidden_token[i]).substr(1));
    // fillers are drawn independently of the hidden word; the image decodes it
    auto img = a.store.lookup(m.image_ids[0]);
    std::size_t hot = 0;
    for (std::size_t j = 0; j < img.size(); ++j)
      if (img[j] != 0.0f) hot = j / 4;
    CHECK(a.content_targets[hot] == a.hidden_token[i]);
    ++seen[hot];
  }
  for (auto s : seen) CHECK(s > 10);
  CHECK(a.masked.stats.masked == 200);
  CHECK(a.control.stats.with_image == 200);
}
