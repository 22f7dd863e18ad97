// Checkpoint file: a text header (format version line, then the encoder
// configuration as JSON) followed by one record per parameter: a text line
// "name dim0 dim1 ..." and the raw little-endian IEEE-754 float32 values.

#pragma once

#include "bidigen/encoder.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bidigen {

inline constexpr const char* kCheckpointMagic = "bidigen checkpoint v1";

inline nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
    return nlohmann::json{{"vocab_size", c.vocab_size},   {"max_seq_len", c.max_seq_len},
                          {"num_layers", c.num_layers},   {"num_heads", c.num_heads},
                          {"hidden_dim", c.hidden_dim},   {"ffn_dim", c.ffn_dim},
                          {"dropout_rate", c.dropout_rate}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    return c;
}

namespace detail {

inline void write_f32_le(std::ostream& out, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, sizeof u);
    const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                       static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
    out.write(b, 4);
}

inline float read_f32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated parameter data");
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                            (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    float f;
    std::memcpy(&f, &u, sizeof f);
    return f;
}

}  // namespace detail

// writes to a temporary file and renames it into place
inline void save_checkpoint(const std::filesystem::path& path, const EncoderModel& model) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
        out << kCheckpointMagic << '\n';
        out << encoder_config_to_json(model.config()).dump() << '\n';
        for (const auto& p : model.params()) {
            out << p.name;
            for (std::size_t d : p.tensor.shape()) out << ' ' << d;
            out << '\n';
            for (double v : p.tensor.data()) detail::write_f32_le(out, static_cast<float>(v));
            out << '\n';
        }
        if (!out) throw std::runtime_error("write failure on checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

inline EncoderModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic)
        throw std::runtime_error("checkpoint " + path.string() + ": unrecognized format");
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint " + path.string() + ": missing config");
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("checkpoint " + path.string() + ": malformed config");
    EncoderModel model(encoder_config_from_json(j), 0);
    for (auto& p : model.params()) {
        if (!std::getline(in, line))
            throw std::runtime_error("checkpoint " + path.string() + ": missing record for " + p.name);
        std::istringstream hdr(line);
        std::string name;
        hdr >> name;
        if (name != p.name)
            throw std::runtime_error("checkpoint " + path.string() + ": expected parameter " + p.name +
                                     ", found " + name);
        Shape shape;
        std::size_t d;
        while (hdr >> d) shape.push_back(d);
        if (shape != p.tensor.shape())
            throw std::runtime_error("checkpoint " + path.string() + ": shape mismatch for " + p.name);
        for (double& v : p.tensor.data()) v = static_cast<double>(detail::read_f32_le(in));
        char nl;
        in.read(&nl, 1);
        if (!in || nl != '\n')
            throw std::runtime_error("checkpoint " + path.string() + ": malformed record for " + p.name);
    }
    return model;
}

}  // namespace bidigen
