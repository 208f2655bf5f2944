#include <string>
#include <vector>

#include "doctest.h"
#include "smcprog/error.hpp"
#include "smcprog/llm.hpp"
#include "smcprog/rng.hpp"

using namespace smcprog;

namespace {

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

// Random program text; every line carries a unique id so line blocks are unique.
std::vector<std::string> random_lines(Rng& rng, std::size_t n) {
    static const char* words[] = {"x", "total", "for", "if", "return", "+=", "(", ")", "  ", "\t", "1", "0.5"};
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < n; ++i) {
        std::string line(rng.index(3) * 4, ' ');
        for (std::uint64_t w = 0, k = 1 + rng.index(5); w < k; ++w) line += std::string(words[rng.index(12)]) + " ";
        line += "# id" + std::to_string(i) + ";";
        lines.push_back(line);
    }
    return lines;
}

std::string join(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) out += (i > from ? "\n" : "") + lines[i];
    return out;
}

std::string render(const std::vector<DiffEdit>& edits) {
    std::string out = "<NAME>\nSome Edit\n</NAME>\n<DESCRIPTION>\nd\n</DESCRIPTION>\n<DIFF>\n";
    for (const auto& e : edits) out += "<<<<<<< SEARCH\n" + e.search + "\n=======\n" + e.replace + "\n>>>>>>> REPLACE\n";
    return out + "</DIFF>\n";
}

}  // namespace

TEST_SUITE("diff") {
    TEST_CASE("unique matches splice exactly (generated sources)") {
        Rng rng(42);
        for (int trial = 0; trial < 500; ++trial) {
            const auto lines = random_lines(rng, 3 + rng.index(30));
            const std::string source = join(lines, 0, lines.size());
            const std::size_t a = rng.index(lines.size());
            const std::size_t b = a + 1 + rng.index(std::min<std::size_t>(4, lines.size() - a));
            const std::string search = join(lines, a, b);
            const std::string replace = "new_" + std::to_string(trial) + "()\n    pass";
            const std::string got = apply_diff(source, {{search, replace}});
            const std::string prefix = a ? join(lines, 0, a) + "\n" : "";
            const std::string suffix = b < lines.size() ? "\n" + join(lines, b, lines.size()) : "";
            CHECK(got == prefix + replace + suffix);

            const auto parsed = parse_response(render({{search, replace}}), ExpectedPayload::Diff);
            REQUIRE(parsed.is_diff());
            CHECK(parsed.edits().size() == 1);
            CHECK(apply_diff(source, parsed.edits()) == got);
        }
    }

    TEST_CASE("duplicated snippets are ambiguous (generated sources)") {
        Rng rng(7);
        for (int trial = 0; trial < 200; ++trial) {
            auto lines = random_lines(rng, 2 + rng.index(20));
            const std::string dup = "value = compute(" + std::to_string(trial) + ")";
            lines.insert(lines.begin() + static_cast<long>(rng.index(lines.size() + 1)), dup);
            lines.insert(lines.begin() + static_cast<long>(rng.index(lines.size() + 1)), dup);
            const std::string source = join(lines, 0, lines.size());
            CHECK(code_of([&] { (void)apply_diff(source, {{dup, "value = 0"}}); }) == ErrorCode::AmbiguousMatch);
        }
    }

    TEST_CASE("no-op edits are rejected") {
        Rng rng(8);
        for (int trial = 0; trial < 100; ++trial) {
            const auto lines = random_lines(rng, 1 + rng.index(10));
            const std::string source = join(lines, 0, lines.size());
            const std::string s = lines[rng.index(lines.size())];
            CHECK(code_of([&] { (void)apply_diff(source, {{s, s}}); }) == ErrorCode::NoOpEdit);
        }
    }

    TEST_CASE("edits apply sequentially") {
        const std::string src = "a = 1\nb = 2\nc = 3";
        // Second edit matches text produced by the first.
        CHECK(apply_diff(src, {{"a = 1", "a = 10"}, {"a = 10\nb = 2", "a = 10\nb = 20"}}) == "a = 10\nb = 20\nc = 3");
        // Second edit targets text the first one removed.
        CHECK(code_of([&] { (void)apply_diff(src, {{"b = 2", "b = 5"}, {"b = 2", "b = 7"}}); }) == ErrorCode::NoMatch);
        // The first edit creates a duplicate that makes the second ambiguous.
        CHECK(code_of([&] { (void)apply_diff(src, {{"c = 3", "a = 1"}, {"a = 1", "z"}}); }) ==
              ErrorCode::AmbiguousMatch);
        // A failing edit leaves no partial result behind: the caller gets an exception only.
        CHECK(code_of([&] { (void)apply_diff(src, {{"missing", "x"}}); }) == ErrorCode::NoMatch);
    }

    TEST_CASE("matching is byte exact unless lenient") {
        const std::string src = "def f():\n    return 1   \n";
        CHECK(code_of([&] { (void)apply_diff(src, {{"    return 1\n", "    return 2\n"}}); }) == ErrorCode::NoMatch);
        CHECK(apply_diff(src, {{"    return 1", "    return 2"}}, {true}) == "def f():\n    return 2\n");
        CHECK(code_of([&] { (void)apply_diff("a\n\tb\n", {{"  b", "c"}}); }) == ErrorCode::NoMatch);
    }

    TEST_CASE("parse errors") {
        CHECK(code_of([] { (void)parse_response("no tags", ExpectedPayload::Diff); }) == ErrorCode::MissingTag);
        CHECK(code_of([] { (void)parse_response("<CODE>\n```py\n```\n</CODE>", ExpectedPayload::Code); }) ==
              ErrorCode::EmptyCode);
        CHECK(code_of([] { (void)parse_response("<DIFF>\n<<<<<<< SEARCH\nx\n</DIFF>", ExpectedPayload::Diff); }) ==
              ErrorCode::MalformedDiffBlock);
        CHECK(code_of([] { (void)parse_response("<DIFF>\n=======\n</DIFF>", ExpectedPayload::Diff); }) ==
              ErrorCode::MalformedDiffBlock);
        CHECK(code_of([] { (void)parse_response("<DIFF>\nprose only\n</DIFF>", ExpectedPayload::Diff); }) ==
              ErrorCode::MalformedDiffBlock);
        CHECK(code_of([] { (void)parse_response("<CODE>x</CODE>", ExpectedPayload::Diff); }) == ErrorCode::MissingTag);
    }

    TEST_CASE("code payloads, names and multi-block diffs") {
        const auto r = parse_response("<NAME>Faster Loop-v2!</NAME><DESCRIPTION> why </DESCRIPTION>\n<CODE>\n```python\n"
                                      "def f():\n    return 2\n```\n</CODE>",
                                      ExpectedPayload::Code);
        CHECK(r.name == "faster_loop_v2");
        CHECK(r.description == "why");
        CHECK(r.code() == "def f():\n    return 2");

        const auto bare = parse_response("<CODE>\nprint(1)\n</CODE>", ExpectedPayload::Code);
        CHECK(bare.code() == "print(1)");

        const auto d = parse_response(render({{"a", "b"}, {"c\nd", "e"}}), ExpectedPayload::Diff);
        REQUIRE(d.edits().size() == 2);
        CHECK(d.edits()[1].search == "c\nd");
        CHECK(d.edits()[1].replace == "e");
        CHECK(normalize_edit_name("  Use NumPy  ") == "use_numpy");
    }
}
