#include "lsast/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "lsast/error.hpp"

namespace lsast {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'S', 'P', 'C', 'K', 'P', 'T', '1'};

[[noreturn]] void corrupt(const fs::path& path, const std::string& what) {
    fail(ErrorKind::corrupt_checkpoint, "corrupt checkpoint '" + path.string() + "': " + what);
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.first == name; });
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    fail(ErrorKind::corrupt_checkpoint, "checkpoint has no tensor '" + name + "'");
}

void Checkpoint::put(const std::string& name, Tensor value) {
    for (auto& [n, t] : tensors)
        if (n == name) {
            t = std::move(value);
            return;
        }
    tensors.emplace_back(name, std::move(value));
}

void Checkpoint::store(const std::vector<std::pair<std::string, Var>>& params) {
    for (const auto& [name, v] : params) put(name, v.value());
}

void Checkpoint::restore(const std::vector<std::pair<std::string, Var>>& params) const {
    for (const auto& [name, v] : params) {
        const Tensor& src = tensor(name);
        if (src.shape() != v.shape())
            fail(ErrorKind::corrupt_checkpoint, "tensor '" + name + "' has shape " + shape_str(src.shape()) +
                                                    ", expected " + shape_str(v.shape()));
        Var handle = v;
        handle.mutable_value() = src;
    }
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    json entries = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        const std::uint64_t nbytes = t.size() * sizeof(double);
        entries.push_back({{"name", name}, {"dtype", "f64"}, {"shape", t.shape()}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    }
    const json header = {{"format_version", checkpoint_format_version}, {"metadata", ckpt.metadata}, {"tensors", entries}};
    const std::string text = header.dump();
    const std::uint64_t len = text.size();

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write checkpoint '" + path.string() + "'");
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, t] : ckpt.tensors)
            out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        out.flush();
        if (!out) fail(ErrorKind::io, "cannot write checkpoint '" + path.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::io, "cannot write checkpoint '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open checkpoint '" + path.string() + "'");
    const auto file_size = static_cast<std::uint64_t>(fs::file_size(path));

    char magic[8];
    std::uint64_t len = 0;
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) corrupt(path, "bad magic");
    if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > file_size - 16) corrupt(path, "bad header length");
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) corrupt(path, "truncated header");
    const std::uint64_t payload_start = 16 + len;

    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        corrupt(path, std::string("header is not valid JSON (") + e.what() + ")");
    }

    Checkpoint ckpt;
    try {
        if (header.at("format_version").get<int>() != checkpoint_format_version)
            corrupt(path, "unsupported format_version " + header.at("format_version").dump());
        ckpt.metadata = header.at("metadata");
        for (const json& e : header.at("tensors")) {
            const std::string name = e.at("name").get<std::string>();
            if (e.at("dtype").get<std::string>() != "f64") corrupt(path, "tensor '" + name + "' has unsupported dtype");
            const Shape shape = e.at("shape").get<Shape>();
            const auto offset = e.at("offset").get<std::uint64_t>();
            const auto nbytes = e.at("nbytes").get<std::uint64_t>();
            if (nbytes != shape_size(shape) * sizeof(double))
                corrupt(path, "tensor '" + name + "' shape " + shape_str(shape) + " does not match its payload size");
            if (offset > file_size - payload_start || nbytes > file_size - payload_start - offset)
                corrupt(path, "tensor '" + name + "' runs past the end of the file");
            if (ckpt.has(name)) corrupt(path, "duplicate tensor '" + name + "'");
            Tensor t(shape);
            in.seekg(static_cast<std::streamoff>(payload_start + offset));
            if (!in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(nbytes)))
                corrupt(path, "truncated payload for '" + name + "'");
            ckpt.tensors.emplace_back(name, std::move(t));
        }
    } catch (const json::exception& e) {
        corrupt(path, std::string("malformed header (") + e.what() + ")");
    }
    return ckpt;
}

}  // namespace lsast
