#include "comhom/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "comhom/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; byte swapping is not implemented");
static_assert(sizeof(float) == 4);

namespace comhom::nn {

namespace fs = std::filesystem;

void CheckpointMeta::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries)
        if (k == key) {
            v = value;
            return;
        }
    entries.emplace_back(key, value);
}

const std::string* CheckpointMeta::find(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return &v;
    return nullptr;
}

const std::string& CheckpointMeta::require(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw LoadError("checkpoint metadata missing key '" + key + "'");
    return *v;
}

void save_checkpoint(const std::string& dir, const ParameterSet& params,
                     const CheckpointMeta& meta) {
    fs::create_directories(dir);
    const fs::path root(dir);

    std::ofstream manifest(root / "manifest.txt");
    if (!manifest) throw LoadError("cannot write " + (root / "manifest.txt").string());
    manifest << "comhom-checkpoint 1\n";
    for (const auto& [k, v] : meta.entries) manifest << "meta " << k << ' ' << v << '\n';

    for (const auto& [name, entry] : params) {
        const std::string file = name + ".bin";
        manifest << "param " << name << " f32 ";
        for (std::size_t i = 0; i < entry.value.shape.size(); ++i)
            manifest << (i ? "x" : "") << entry.value.shape[i];
        if (entry.value.shape.empty()) manifest << "1";
        manifest << ' ' << file << '\n';

        std::ofstream blob(root / file, std::ios::binary);
        if (!blob) throw LoadError("cannot write " + (root / file).string());
        blob.write(reinterpret_cast<const char*>(entry.value.data()),
                   static_cast<std::streamsize>(entry.value.numel() * sizeof(float)));
        if (!blob) throw LoadError("short write on " + (root / file).string());
    }
    manifest.flush();
    if (!manifest) throw LoadError("short write on " + (root / "manifest.txt").string());
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    const fs::path root(dir);
    const fs::path mpath = root / "manifest.txt";
    std::ifstream manifest(mpath);
    if (!manifest) throw LoadError("cannot open " + mpath.string());

    std::string header;
    std::getline(manifest, header);
    if (header != "comhom-checkpoint 1")
        throw LoadError(mpath.string() + ": unrecognized header '" + header + "'");

    LoadedCheckpoint out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            out.meta.entries.emplace_back(key, value);
        } else if (kind == "param") {
            std::string name, dtype, dims, file;
            ls >> name >> dtype >> dims >> file;
            if (!ls || dtype != "f32")
                throw LoadError(mpath.string() + ": bad param line '" + line + "'");
            std::vector<int> shape;
            std::istringstream ds(dims);
            std::string tok;
            while (std::getline(ds, tok, 'x')) shape.push_back(std::stoi(tok));

            Tensor t(shape);
            const fs::path bpath = root / file;
            std::ifstream blob(bpath, std::ios::binary);
            if (!blob) throw LoadError("cannot open " + bpath.string());
            blob.read(reinterpret_cast<char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * sizeof(float)));
            if (blob.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float)))
                throw LoadError(bpath.string() + ": truncated blob");
            char extra;
            if (blob.read(&extra, 1), blob.gcount() != 0)
                throw LoadError(bpath.string() + ": trailing bytes");
            out.params.add(name, std::move(t));
        } else {
            throw LoadError(mpath.string() + ": unrecognized line '" + line + "'");
        }
    }
    return out;
}

}  // namespace comhom::nn
