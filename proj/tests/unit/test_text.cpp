#include <doctest.h>

#include <pairsem/text.hpp>

using namespace pairsem;

TEST_SUITE("text")
{
    TEST_CASE("normalize_surface lowercases and collapses whitespace")
    {
        CHECK(normalize_surface("  Melting   Point\t") == "melting point");
        CHECK(normalize_surface("GPT-4\n\nmodel") == "gpt-4 model");
        CHECK(normalize_surface("") == "");
        CHECK(normalize_surface(" \t ") == "");
    }

    TEST_CASE("normalize_surface is idempotent")
    {
        for (const char* s : {"A  b", " x ", "Already fine", "MiXeD\tCase  Text"}) {
            auto once = normalize_surface(s);
            CHECK(normalize_surface(once) == once);
        }
    }

    TEST_CASE("tokenize splits on non-alphanumerics")
    {
        auto t = tokenize("ENTITY: Foo-Bar | ASPECT: x2.");
        CHECK(t == std::vector<std::string>{"entity", "foo", "bar", "aspect", "x2"});
        CHECK(tokenize("...").empty());
        CHECK(tokenize("abc") == std::vector<std::string>{"abc"});
    }

    TEST_CASE("join")
    {
        CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
        CHECK(join({}, ",") == "");
        CHECK(join({"x"}, ",") == "x");
    }
}
