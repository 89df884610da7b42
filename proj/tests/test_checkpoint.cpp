#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "grpl/checkpoint.hpp"
#include "grpl/model.hpp"
#include "grpl/scenes.hpp"

using namespace grpl;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "grpl_ckpt";
    fs::create_directories(dir);
    return (dir / name).string();
}

PolicyParams small_params(uint64_t seed) {
    PolicyConfig cfg;
    cfg.vocab_size = static_cast<int>(build_vocab(default_scene_alphabet()).size());
    cfg.embed_dim = 8;
    cfg.hidden_dim = 12;
    cfg.layers = 1;
    return init_params(cfg, seed);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    PolicyParams p = small_params(3);
    p.role = "reference";
    Vocab v = build_vocab(default_scene_alphabet());

    AdamState opt = AdamState::like(p);
    opt.t = 7;
    opt.m[0][0] = 0.125f;
    opt.v[2][3] = 2.5f;

    const std::string path = temp_path("roundtrip.grpl");
    save_checkpoint(p, &opt, v.tokens(), {{"note", "test"}}, 42, path);
    LoadedCheckpoint loaded = load_checkpoint(path);

    REQUIRE(loaded.params.arrays == p.arrays);
    REQUIRE(loaded.params.names == p.names);
    REQUIRE(loaded.params.role == "reference");
    REQUIRE(loaded.params.config == p.config);
    REQUIRE(loaded.meta.step == 42);
    REQUIRE(loaded.meta.vocab_tokens == v.tokens());
    REQUIRE(loaded.meta.extra.at("note") == "test");
    REQUIRE(loaded.opt_state.has_value());
    REQUIRE(loaded.opt_state->t == 7);
    REQUIRE(loaded.opt_state->m == opt.m);
    REQUIRE(loaded.opt_state->v == opt.v);

    // Identical forward outputs on a probe sequence.
    std::vector<TokenId> probe = {kBos, kRef, 13, kSep};
    REQUIRE(next_token_logits<float>(loaded.params, probe) ==
            next_token_logits<float>(p, probe));
}

TEST_CASE("checkpoints without optimizer state omit it") {
    PolicyParams p = small_params(4);
    const std::string path = temp_path("noopt.grpl");
    save_checkpoint(p, nullptr, {}, ordered_json::object(), 0, path);
    LoadedCheckpoint loaded = load_checkpoint(path);
    REQUIRE_FALSE(loaded.opt_state.has_value());
    REQUIRE(loaded.params.role == "policy");
}

TEST_CASE("a corrupted payload byte fails the checksum") {
    PolicyParams p = small_params(5);
    const std::string path = temp_path("corrupt.grpl");
    save_checkpoint(p, nullptr, {}, ordered_json::object(), 0, path);

    // Flip one byte near the end of the file (inside the payload).
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::streamoff>(f.tellg());
    f.seekp(size - 5);
    char b;
    f.seekg(size - 5);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x40);
    f.seekp(size - 5);
    f.write(&b, 1);
    f.close();

    REQUIRE_THROWS_WITH(load_checkpoint(path),
                        Catch::Matchers::ContainsSubstring("checksum"));
}

TEST_CASE("non-checkpoint files and bad versions are rejected") {
    const std::string path = temp_path("garbage.grpl");
    {
        std::ofstream out(path, std::ios::binary);
        out << "definitely not a checkpoint";
    }
    REQUIRE_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("magic"));
    REQUIRE_THROWS_AS(load_checkpoint(temp_path("missing.grpl")), ValidationError);
}

TEST_CASE("role tags round trip through the header") {
    for (const char* role : {"policy", "reference", "old"}) {
        PolicyParams p = small_params(6);
        p.role = role;
        const std::string path = temp_path(std::string("role_") + role + ".grpl");
        save_checkpoint(p, nullptr, {}, ordered_json::object(), 1, path);
        REQUIRE(load_checkpoint(path).meta.role == role);
    }
}
