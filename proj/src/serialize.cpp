#include "iwin/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace iwin {

static_assert(std::endian::native == std::endian::little,
              "weight container assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'I', 'W', 'T', 'N', 'S', 'R', '0', '1'};
}

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& items,
                  const std::map<std::string, std::string>& meta) {
    nlohmann::json manifest;
    manifest["meta"] = meta;
    auto& entries = manifest["tensors"];
    std::uint64_t offset = 0;
    for (const auto& [name, t] : items) {
        const std::uint64_t nbytes = static_cast<std::uint64_t>(t.size()) * sizeof(double);
        entries[name] = {{"shape", t.shape()}, {"dtype", "f64"}, {"offset", offset}, {"nbytes", nbytes}};
        offset += nbytes;
    }
    const std::string mstr = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t mlen = mstr.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& [name, t] : items) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
    }
    if (!out) throw IoError("write failed for " + path);
}

TensorArchive load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError(path + " is not a weight container");
    }
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    std::string mstr(mlen, '\0');
    in.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw IoError("truncated manifest in " + path);
    const nlohmann::json manifest = nlohmann::json::parse(mstr);

    const std::streampos payload_start = in.tellg();
    TensorArchive archive;
    if (manifest.contains("meta")) {
        for (auto& [k, v] : manifest.at("meta").items()) {
            archive.meta[k] = v.get<std::string>();
        }
    }
    for (auto& [name, entry] : manifest.at("tensors").items()) {
        if (entry.at("dtype").get<std::string>() != "f64") {
            throw IoError("unsupported dtype for tensor " + name);
        }
        const Shape shape = entry.at("shape").get<Shape>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
        if (nbytes != static_cast<std::uint64_t>(shape_numel(shape)) * sizeof(double)) {
            throw IoError("manifest size mismatch for tensor " + name);
        }
        std::vector<double> values(nbytes / sizeof(double));
        in.seekg(payload_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(nbytes));
        if (!in) throw IoError("truncated payload for tensor " + name);
        archive.tensors.emplace(name, Tensor(shape, std::move(values)));
    }
    return archive;
}

}  // namespace iwin
