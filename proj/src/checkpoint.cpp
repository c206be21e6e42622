#include "cellnas/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "cellnas/error.hpp"

namespace cellnas {

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json blocks = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t b = 0; b < ckpt.parameters.size(); ++b) {
        blocks.push_back({{"name", ckpt.parameters.name(b)}, {"shape", ckpt.parameters[b].shape()}, {"offset", offset}});
        offset += ckpt.parameters[b].size() * sizeof(double);
    }
    const std::string header = nlohmann::json{{"blocks", blocks}, {"meta", ckpt.meta}}.dump();

    std::string out;
    out.reserve(4 + header.size() + offset);
    put_le(out, header.size(), 4);
    out += header;
    for (const auto& t : ckpt.parameters.tensors()) {
        for (double v : t.values()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4) throw Error(ErrorKind::ParseError, "checkpoint shorter than its length prefix");
    const std::size_t header_len = get_le(bytes, 0, 4);
    if (bytes.size() < 4 + header_len) throw Error(ErrorKind::ParseError, "checkpoint header truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("checkpoint header: ") + e.what());
    }

    Checkpoint ckpt;
    const std::size_t payload = 4 + header_len;
    try {
        if (header.contains("meta")) ckpt.meta = header.at("meta");
        for (const auto& block : header.at("blocks")) {
            Shape shape = block.at("shape").get<Shape>();
            const std::size_t offset = block.at("offset").get<std::size_t>();
            const std::size_t count = element_count(shape);
            if (payload + offset + count * sizeof(double) > bytes.size()) {
                throw Error(ErrorKind::ParseError, "block " + block.at("name").get<std::string>() + " runs past the payload");
            }
            std::vector<double> values(count);
            for (std::size_t i = 0; i < count; ++i) {
                values[i] = std::bit_cast<double>(get_le(bytes, payload + offset + i * sizeof(double), 8));
            }
            ckpt.parameters.add(block.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("checkpoint header: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    const std::string bytes = encode_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return decode_checkpoint(buffer.str());
}

}  // namespace cellnas
