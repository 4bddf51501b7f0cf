#include "doctest.h"

#include "toy.hpp"

#include "forge/bytes.hpp"
#include "forge/corpus.hpp"
#include "forge/image.hpp"
#include "forge/jsonl.hpp"
#include "forge/pipeline.hpp"
#include "forge/types.hpp"

#include <cstdio>
#include <fstream>
#include <jpeglib.h>
#include <random>
#include <set>
#include <thread>

using namespace forge;
using forge::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Bytes encode_jpeg(int w, int h) {
    jpeg_compress_struct cinfo{};
    jpeg_error_mgr jerr{};
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    unsigned char* buf = nullptr;
    unsigned long size = 0;
    jpeg_mem_dest(&cinfo, &buf, &size);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_start_compress(&cinfo, TRUE);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    while (cinfo.next_scanline < cinfo.image_height) {
        for (int x = 0; x < w; ++x) {
            row[x * 3] = static_cast<unsigned char>(x * 4);
            row[x * 3 + 1] = static_cast<unsigned char>(cinfo.next_scanline * 4);
            row[x * 3 + 2] = 128;
        }
        JSAMPROW ptr = row.data();
        jpeg_write_scanlines(&cinfo, &ptr, 1);
    }
    jpeg_finish_compress(&cinfo);
    Bytes out(buf, buf + size);
    jpeg_destroy_compress(&cinfo);
    std::free(buf);
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

std::string corpus_error(const TempDir& dir, const std::string& line) {
    write_text(dir / "c.jsonl", line + "\n");
    try {
        load_corpus(dir / "c.jsonl");
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("base64 and sha256 known vectors") {
    const std::vector<std::pair<std::string, std::string>> b64 = {
        {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
        {"foobar", "Zm9vYmFy"}};
    for (const auto& [in, enc] : b64) {
        const Bytes raw(in.begin(), in.end());
        CHECK(base64_encode(raw) == enc);
        CHECK(base64_decode(enc) == raw);
    }
    CHECK_THROWS(base64_decode("Zm9v!"));
    std::mt19937 rng(5);
    for (int k = 0; k < 50; ++k) {
        Bytes raw(static_cast<std::size_t>(rng() % 200));
        for (auto& b : raw) b = static_cast<std::uint8_t>(rng());
        CHECK(base64_decode(base64_encode(raw)) == raw);
    }
    CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("enum names round trip") {
    for (auto t : {Task::Caption, Task::Vqa, Task::Ve}) CHECK(parse_task(to_string(t)) == t);
    for (auto s : kAllSplits) CHECK(parse_split(to_string(s)) == s);
    for (auto s : kAllStyles) CHECK(parse_style(to_string(s)) == s);
    for (auto l : kAllVeLabels) CHECK(parse_ve_label_name(to_string(l)) == l);
    CHECK(parse_answer_name("no") == Answer::No);
    CHECK(to_string(Style::OilPainting) == "oil");
    CHECK(parse_task("caption") == Task::Caption);
    CHECK(parse_split("val") == Split::Valid);
    CHECK_THROWS_AS(parse_task("vqa2"), ValidationError);
    CHECK_THROWS_AS(parse_style("watercolor"), ValidationError);
    CHECK(parse_context_mode("fresh") == ContextMode::Fresh);
    CHECK_THROWS_AS(parse_context_mode("sticky"), ConfigError);
}

TEST_CASE("unit keys") {
    CHECK(unit_key("img1/cartoon") == "img1/cartoon");
    CHECK(unit_key("img1/cartoon/pair3") == "img1/cartoon");
    CHECK(unit_key("img1") == "img1");
}

TEST_CASE("jsonl append, torn tail, compaction") {
    TempDir dir;
    const auto path = dir / "x.jsonl";
    {
        JsonlAppender a(path);
        a.append({{"k", "b"}, {"v", 2}});
        a.append({{"k", "a"}, {"v", 1}});
        a.append({{"k", "b"}, {"v", 2}});
    }
    CHECK(read_jsonl(path).size() == 3);
    {
        std::ofstream f(path, std::ios::app);
        f << "{\"k\": \"c\", \"v";  // killed mid-write
    }
    CHECK(read_jsonl(path).size() == 3);
    {
        JsonlAppender resumed(path);
        resumed.append({{"k", "c"}, {"v", 3}});
    }
    CHECK(read_jsonl(path).size() == 4);
    CHECK(read_jsonl(path).back()["v"] == 3);
    {
        std::ofstream f(path, std::ios::app);
        f << "{\"k\": \"d\", \"v";
    }
    compact_jsonl(path, [](const json& j) { return j.at("k").get<std::string>(); });
    const auto lines = read_jsonl(path);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0]["k"] == "a");
    CHECK(lines[1]["k"] == "b");
    CHECK(lines[2]["k"] == "c");
    CHECK(read_text_file(path).back() == '\n');

    write_text(path, "{\"a\":1}\nnot json\n{\"a\":2}\n");
    try {
        read_jsonl(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    CHECK_THROWS_AS(read_jsonl(dir / "missing.jsonl"), IoError);

    write_text(path, std::string(10000, 'x'));  // no newline anywhere
    JsonlAppender(path).append({{"a", 1}});
    CHECK(read_text_file(path) == "{\"a\":1}\n");
}

TEST_CASE("concurrent appends never interleave") {
    TempDir dir;
    const auto path = dir / "c.jsonl";
    JsonlAppender a(path);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&a, t] {
            for (int i = 0; i < 100; ++i) a.append({{"t", t}, {"i", i}, {"pad", std::string(500, 'x')}});
        });
    for (auto& th : threads) th.join();
    const auto lines = read_jsonl(path);
    CHECK(lines.size() == 400);
    std::set<std::pair<int, int>> seen;
    for (const auto& l : lines) seen.emplace(l["t"].get<int>(), l["i"].get<int>());
    CHECK(seen.size() == 400);
}

TEST_CASE("atomic writes replace whole files") {
    TempDir dir;
    write_file_atomic(dir / "f.txt", std::string_view("one"));
    write_file_atomic(dir / "f.txt", std::string_view("two"));
    CHECK(read_text_file(dir / "f.txt") == "two");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 1);
    CHECK_THROWS_AS(read_file(dir / "absent"), IoError);
}

TEST_CASE("patience budget") {
    PatienceBudget budget(3, false);
    int calls = 0;
    auto r = budget.retry("SI", [&](std::uint32_t attempt) -> int {
        ++calls;
        if (attempt < 2) throw ParseError("no");
        return 7;
    });
    CHECK(r == 7);
    CHECK(budget.failures() == 2);
    CHECK(budget.log()[1].attempt == 1);
    CHECK(budget.log()[0].outcome == "parse_error");

    auto none = budget.retry("GEN", [](std::uint32_t) -> int {
        throw provider::ProviderError(provider::FailureKind::SafetyRejection, "blocked");
    });
    CHECK_FALSE(none.has_value());
    CHECK(budget.exhausted());
    CHECK(budget.log().back().outcome == "safety_rejection");

    PatienceBudget strict(5, false);
    CHECK_THROWS_AS(strict.retry("ID",
                                 [](std::uint32_t) -> int {
                                     throw provider::ProviderError(provider::FailureKind::Transport, "down");
                                 }),
                    provider::ProviderError);
    CHECK(strict.failures() == 0);
    CHECK_FALSE(strict.counts(provider::FailureKind::RateLimit));
    CHECK_FALSE(strict.counts(provider::FailureKind::Auth));
    CHECK(strict.counts(provider::FailureKind::ContentRefusal));
    PatienceBudget loose(5, true);
    CHECK(loose.counts(provider::FailureKind::Transport));
    CHECK_FALSE(loose.counts(provider::FailureKind::CacheMiss));
}

TEST_CASE("run_units") {
    for (std::size_t jobs : {1u, 3u}) {
        std::vector<std::atomic<int>> hits(20);
        const auto n = run_units(20, {jobs, std::nullopt, nullptr}, [&](std::size_t i) { ++hits[i]; });
        CHECK(n == 20);
        for (auto& h : hits) CHECK(h.load() == 1);

        std::atomic<int> count{0};
        CHECK(run_units(20, {jobs, 7, nullptr}, [&](std::size_t) { ++count; }) == 7);
        CHECK(count.load() == 7);

        CHECK_THROWS_AS(run_units(20, {jobs, std::nullopt, nullptr},
                                  [](std::size_t i) {
                                      if (i == 4) throw IoError("disk");
                                  }),
                        IoError);
        std::atomic<bool> cancel{true};
        CHECK(run_units(20, {jobs, std::nullopt, &cancel}, [](std::size_t) {}) == 0);
    }
    CHECK(run_units(0, {}, [](std::size_t) {}) == 0);
}

TEST_CASE("corpus loading and validation") {
    TempDir dir;
    fs::create_directories(dir / "images");
    const auto png = forge::testing::toy_png(1, 8, 8);
    write_file_atomic(dir / "images" / "a.png", png);
    write_text(dir / "c.jsonl",
               R"({"id":"a","image":"images/a.png","task":"vqa","split":"valid","questions":[{"question":"Is it red?","answer":"no"}]})"
               "\n"
               R"({"id":"b","image":"images/a.png","task":"ve","split":"train","hypotheses":[{"hypothesis":"A cat.","label":"neutral"}]})"
               "\n");
    const auto items = load_corpus(dir / "c.jsonl");
    REQUIRE(items.size() == 2);
    CHECK(items[0].split == Split::Valid);
    CHECK(std::get<1>(items[0].payload)[0].answer == Answer::No);
    CHECK(items[0].load_image() == png);
    CHECK(filter_task(items, Task::Ve).size() == 1);
    const auto back = source_item_from_json(to_json(items[1], dir.path()), dir.path());
    CHECK(back.image_path == items[1].image_path);
    CHECK(std::get<2>(back.payload)[0].label == VeLabel::Neutral);

    const std::string head = R"({"id":"a","image":"images/a.png","task":"vqa","split":"train",)";
    CHECK(corpus_error(dir, head + R"("questions":[{"question":"Q?","answer":"maybe"}]})").find("'answer'") !=
          std::string::npos);
    CHECK(corpus_error(dir, head + R"("questions":[]})").find("'questions'") != std::string::npos);
    CHECK(corpus_error(dir, R"({"id":"a/b","image":"images/a.png","task":"cap","split":"train","captions":["x"]})")
              .find("'id'") != std::string::npos);
    CHECK(corpus_error(dir, R"({"id":"z","image":"images/none.png","task":"cap","split":"train","captions":["x"]})")
              .find("does not exist") != std::string::npos);
    write_text(dir / "d.jsonl", R"({"id":"a","image":"images/a.png","task":"cap","split":"train","captions":["x"]})"
                                "\n"
                                R"({"id":"a","image":"images/a.png","task":"cap","split":"test","captions":["y"]})"
                                "\n");
    CHECK_THROWS_WITH_AS(load_corpus(dir / "d.jsonl"), doctest::Contains("duplicate item id"), ValidationError);
}

TEST_CASE("image sniffing and transcoding") {
    const auto png = forge::testing::toy_png(9, 12, 7);
    CHECK(image::sniff(png) == image::Format::Png);
    const auto info = image::decode_info(png);
    CHECK(info.width == 12);
    CHECK(info.height == 7);
    CHECK(image::to_png(png) == png);

    const auto jpg = encode_jpeg(20, 10);
    CHECK(image::sniff(jpg) == image::Format::Jpeg);
    CHECK(image::decode_info(jpg).width == 20);
    const auto converted = image::to_png(jpg);
    CHECK(image::sniff(converted) == image::Format::Png);
    CHECK(image::decode_info(converted).height == 10);
    CHECK(std::string(image::media_type(image::Format::Jpeg)) == "image/jpeg");

    const Bytes junk{'G', 'I', 'F', '8', '9', 'a', 0, 0};
    CHECK_FALSE(image::sniff(junk).has_value());
    CHECK_THROWS_AS(image::to_png(junk), ValidationError);
    Bytes truncated(png.begin(), png.begin() + static_cast<long>(png.size() / 2));
    CHECK_THROWS_AS(image::decode_info(truncated), ValidationError);
    Bytes short_jpg(jpg.begin(), jpg.begin() + static_cast<long>(jpg.size() / 3));
    CHECK_THROWS_AS(image::to_png(short_jpg), ValidationError);
    CHECK_THROWS(image::encode_png_rgb(Bytes(5), 2, 2));
}

}  // TEST_SUITE
