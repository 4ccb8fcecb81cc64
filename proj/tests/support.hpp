#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "vlmgeo/tensor_store.hpp"

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("vlmgeo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Independent little-endian framing, used to build files the library would
// refuse to write.
inline std::vector<std::uint8_t> frame(const std::string& magic, std::uint32_t version, const nlohmann::json& header,
                                       const std::vector<float>& payload) {
    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    };
    const std::string text = header.dump();
    u32(version);
    u32(static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (float f : payload) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
    return out;
}

inline vlmgeo::ActivationSequence random_sequence(std::mt19937_64& gen, std::size_t rows, std::size_t cols,
                                                  std::size_t d, const std::string& id,
                                                  const std::string& model = "m") {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    vlmgeo::ActivationSequence s;
    s.length = rows * cols;
    s.dim = d;
    s.grid = {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)};
    s.stimulus_id = id;
    s.model_id = model;
    s.layer_tag = "post-projection";
    s.tokens.resize(s.length * d);
    for (auto& x : s.tokens) x = nd(gen);
    return s;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(VLMGEO_FIXTURE_DIR) / name;
}

}  // namespace testing_support
