#include "clover/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace clover {

namespace {
constexpr char kMagic[8] = {'C', 'L', 'V', 'R', 'T', 'N', 'S', '1'};
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
    nlohmann::ordered_json header;
    header["meta"] = file.meta;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (const auto& [name, data] : file.tensors)
        tensors.push_back({{"name", name}, {"len", data.size()}});
    header["tensors"] = std::move(tensors);
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, data] : file.tensors)
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) throw DataError("short write on checkpoint: " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a tensor checkpoint: " + path.string());
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    TensorFile file;
    file.meta = header["meta"];
    for (const auto& t : header["tensors"]) {
        std::vector<double> data(t["len"].get<std::size_t>());
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        file.tensors.emplace_back(t["name"].get<std::string>(), std::move(data));
    }
    if (!in) throw DataError("truncated checkpoint: " + path.string());
    return file;
}

void save_policy(const PolicyParams& params, const std::filesystem::path& path,
                 const nlohmann::ordered_json& extra_meta) {
    TensorFile file;
    file.meta["kind"] = "policy";
    file.meta["dims"] = {{"vocab", params.dims.vocab},
                         {"embed", params.dims.embed},
                         {"hidden", params.dims.hidden},
                         {"max_len", params.dims.max_len},
                         {"horizon", params.dims.horizon}};
    if (!extra_meta.is_null()) file.meta["config"] = extra_meta;
    params.for_each_tensor([&file](const char* name, const std::vector<double>& v) {
        file.tensors.emplace_back(name, v);
    });
    write_tensor_file(path, file);
}

std::pair<PolicyParams, nlohmann::ordered_json> load_policy(const std::filesystem::path& path) {
    TensorFile file = read_tensor_file(path);
    if (file.meta.value("kind", "") != "policy")
        throw DataError("checkpoint is not a policy: " + path.string());
    PolicyDims dims;
    dims.vocab = file.meta["dims"]["vocab"];
    dims.embed = file.meta["dims"]["embed"];
    dims.hidden = file.meta["dims"]["hidden"];
    dims.max_len = file.meta["dims"]["max_len"];
    dims.horizon = file.meta["dims"]["horizon"];
    PolicyParams params = zeros_like(dims);
    std::size_t idx = 0;
    params.for_each_tensor([&file, &idx, &path](const char* name, std::vector<double>& v) {
        const auto& [tname, data] = file.tensors.at(idx++);
        if (tname != name || data.size() != v.size())
            throw DataError("checkpoint tensor mismatch at " + tname + " in " + path.string());
        v = data;
    });
    nlohmann::ordered_json config;
    if (file.meta.contains("config")) config = file.meta["config"];
    return {std::move(params), std::move(config)};
}

}  // namespace clover
