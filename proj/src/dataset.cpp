#include "comhom/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "comhom/error.hpp"
#include "json.hpp"

namespace comhom::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::vector<int> Dataset::roster() const {
    std::set<int> ids;
    for (const Window& w : windows) ids.insert(w.subject);
    return {ids.begin(), ids.end()};
}

std::vector<int> Dataset::indices_of_subject(int subject) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < windows.size(); ++i)
        if (windows[i].subject == subject) out.push_back(static_cast<int>(i));
    return out;
}

int Dataset::count_of(int subject, const GestureLabel& label) const {
    int n = 0;
    for (const Window& w : windows)
        if (w.subject == subject && w.label == label) ++n;
    return n;
}

namespace {

void require_keys(const json& obj, const std::vector<std::string>& keys, const std::string& where) {
    for (const std::string& k : keys)
        if (!obj.contains(k)) throw LoadError(where + ": missing key '" + k + "'");
    for (const auto& [k, v] : obj.items())
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw LoadError(where + ": unknown key '" + k + "'");
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const fs::path mpath = root / "manifest.json";
    std::ifstream mf(mpath);
    if (!mf) throw LoadError("cannot open " + mpath.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw LoadError(mpath.string() + ": " + e.what());
    }
    require_keys(manifest, {"schema_version", "sample_rate_hz", "channels", "window_samples", "subjects"},
                 mpath.string());
    if (manifest["schema_version"].get<int>() != 1)
        throw LoadError(mpath.string() + ": unsupported schema_version");

    Dataset ds;
    ds.sample_rate_hz = manifest["sample_rate_hz"].get<int>();
    ds.channels = manifest["channels"].get<int>();
    ds.window_samples = manifest["window_samples"].get<int>();
    if (ds.channels < 1 || ds.window_samples < 1 || ds.sample_rate_hz < 1)
        throw LoadError(mpath.string() + ": non-positive dimensions");

    const std::size_t window_floats =
        static_cast<std::size_t>(ds.channels) * static_cast<std::size_t>(ds.window_samples);

    for (const json& subj : manifest["subjects"]) {
        require_keys(subj, {"id", "data_file", "labels_file", "count"}, mpath.string() + " subjects[]");
        const int id = subj["id"].get<int>();
        const int count = subj["count"].get<int>();
        const fs::path dpath = root / subj["data_file"].get<std::string>();
        const fs::path lpath = root / subj["labels_file"].get<std::string>();

        std::ifstream blob(dpath, std::ios::binary);
        if (!blob) throw LoadError("cannot open " + dpath.string());
        blob.seekg(0, std::ios::end);
        const std::size_t bytes = static_cast<std::size_t>(blob.tellg());
        const std::size_t expected = static_cast<std::size_t>(count) * window_floats * sizeof(float);
        if (bytes != expected)
            throw LoadError(dpath.string() + ": expected " + std::to_string(expected) +
                            " bytes, found " + std::to_string(bytes));
        blob.seekg(0);

        std::ifstream labels(lpath);
        if (!labels) throw LoadError("cannot open " + lpath.string());
        std::string line;
        if (!std::getline(labels, line) || line != "index,direction,modifier")
            throw LoadError(lpath.string() + ": bad header '" + line + "'");

        for (int i = 0; i < count; ++i) {
            Window w;
            w.subject = id;
            w.samples = nn::Tensor({ds.channels, ds.window_samples});
            blob.read(reinterpret_cast<char*>(w.samples.data()),
                      static_cast<std::streamsize>(window_floats * sizeof(float)));
            if (blob.gcount() != static_cast<std::streamsize>(window_floats * sizeof(float)))
                throw LoadError(dpath.string() + ": truncated at window " + std::to_string(i));
            if (!w.samples.all_finite())
                throw LoadError(dpath.string() + ": non-finite sample in window " + std::to_string(i));

            if (!std::getline(labels, line))
                throw LoadError(lpath.string() + ": expected " + std::to_string(count) + " rows");
            std::istringstream ls(line);
            std::string idx_s, dir_s, mod_s;
            if (!std::getline(ls, idx_s, ',') || !std::getline(ls, dir_s, ',') ||
                !std::getline(ls, mod_s))
                throw LoadError(lpath.string() + ": bad row '" + line + "'");
            if (std::stoi(idx_s) != i)
                throw LoadError(lpath.string() + ": row index mismatch at " + std::to_string(i));
            try {
                w.label.direction = parse_direction(dir_s);
                w.label.modifier = parse_modifier(mod_s);
            } catch (const LabelError& e) {
                throw LoadError(lpath.string() + ": " + e.what());
            }
            if (w.label.is_rest())
                throw LoadError(lpath.string() + ": rest label stored at row " + std::to_string(i));
            ds.windows.push_back(std::move(w));
        }
        if (std::getline(labels, line) && !line.empty())
            throw LoadError(lpath.string() + ": trailing rows beyond count");
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    const fs::path root(dir);
    fs::create_directories(root);

    json manifest;
    manifest["schema_version"] = 1;
    manifest["sample_rate_hz"] = ds.sample_rate_hz;
    manifest["channels"] = ds.channels;
    manifest["window_samples"] = ds.window_samples;
    manifest["subjects"] = json::array();

    for (const int id : ds.roster()) {
        const std::vector<int> idx = ds.indices_of_subject(id);
        const std::string data_file = "data_" + std::to_string(id) + ".bin";
        const std::string labels_file = "labels_" + std::to_string(id) + ".csv";

        std::ofstream blob(root / data_file, std::ios::binary);
        if (!blob) throw LoadError("cannot write " + (root / data_file).string());
        std::ofstream labels(root / labels_file);
        if (!labels) throw LoadError("cannot write " + (root / labels_file).string());
        labels << "index,direction,modifier\n";

        int row = 0;
        for (const int i : idx) {
            const Window& w = ds.windows[static_cast<std::size_t>(i)];
            blob.write(reinterpret_cast<const char*>(w.samples.data()),
                       static_cast<std::streamsize>(w.samples.numel() * sizeof(float)));
            labels << row << ',' << direction_name(w.label.direction) << ','
                   << modifier_name(w.label.modifier) << '\n';
            ++row;
        }
        if (!blob || !labels) throw LoadError("short write for subject " + std::to_string(id));

        json subj;
        subj["id"] = id;
        subj["data_file"] = data_file;
        subj["labels_file"] = labels_file;
        subj["count"] = row;
        manifest["subjects"].push_back(std::move(subj));
    }

    std::ofstream mf(root / "manifest.json");
    if (!mf) throw LoadError("cannot write " + (root / "manifest.json").string());
    mf << manifest.dump(2) << '\n';
}

LosoSplit split_loso(const Dataset& ds, int fold, double calib_fraction, RngStream& rng) {
    const std::vector<int> roster = ds.roster();
    if (roster.size() < 3)
        throw ConfigError("leave-one-subject-out needs at least 3 subjects, have " +
                          std::to_string(roster.size()));
    if (fold < 0 || fold >= static_cast<int>(roster.size()))
        throw ConfigError("fold " + std::to_string(fold) + " out of range for " +
                          std::to_string(roster.size()) + " subjects");
    if (calib_fraction <= 0.0 || calib_fraction >= 1.0)
        throw ConfigError("calib_fraction must lie in (0,1)");

    LosoSplit split;
    split.eval_subject = roster[static_cast<std::size_t>(fold)];
    for (const int id : roster) {
        if (id == split.eval_subject) continue;
        if (split.val_subject < 0) split.val_subject = id;  // roster is sorted
    }

    for (std::size_t i = 0; i < ds.windows.size(); ++i) {
        const int subj = ds.windows[i].subject;
        if (subj == split.eval_subject) continue;
        if (subj == split.val_subject)
            split.validation.push_back(static_cast<int>(i));
        else
            split.pretrain.push_back(static_cast<int>(i));
    }

    // Stratified calibration/test split of the evaluation subject, class by
    // class in the fixed class order.
    for (int cls = 0; cls < kNumStoredClasses; ++cls) {
        const GestureLabel want = label_from_class_index(cls);
        std::vector<int> members;
        for (std::size_t i = 0; i < ds.windows.size(); ++i)
            if (ds.windows[i].subject == split.eval_subject && ds.windows[i].label == want)
                members.push_back(static_cast<int>(i));
        if (members.empty()) continue;
        rng.shuffle(members);
        const int n_calib =
            static_cast<int>(std::floor(calib_fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (static_cast<int>(k) < n_calib)
                split.calibration.push_back(members[k]);
            else
                split.test.push_back(members[k]);
        }
    }
    std::sort(split.calibration.begin(), split.calibration.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

std::vector<Window> inject_noise(std::vector<Window> batch, std::optional<double> snr_db,
                                 RngStream& rng) {
    if (!snr_db.has_value()) return batch;
    if (batch.empty()) throw ConfigError("inject_noise on an empty batch");
    for (const Window& w : batch)
        if (!(w.label == batch.front().label))
            throw LabelError("inject_noise expects a single-class batch");

    // Population statistics over every value in the batch.
    double mean = 0.0;
    std::size_t count = 0;
    for (const Window& w : batch) {
        for (const float v : w.samples.values) mean += v;
        count += w.samples.numel();
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (const Window& w : batch)
        for (const float v : w.samples.values) {
            const double d = v - mean;
            var += d * d;
        }
    var /= static_cast<double>(count);
    if (var == 0.0) return batch;

    const double sigma = std::sqrt(var) / std::pow(10.0, *snr_db / 20.0);
    for (Window& w : batch)
        for (float& v : w.samples.values)
            v += static_cast<float>(sigma * rng.normal());
    return batch;
}

}  // namespace comhom::data
