#include "comhom/model.hpp"

#include <cstddef>

#include "comhom/error.hpp"

namespace comhom::model {

namespace {

const std::string kOperatorNames[] = {"average", "cond_mlp"};
const std::string kHeadsNames[] = {"small", "large"};

nn::LayerGraph head_graph(const std::string& prefix, HeadsKind kind) {
    nn::LayerGraph g;
    if (kind == HeadsKind::Small) {
        g.dense(prefix, kEmbeddingDim, data::kNumDirections);
        return g;
    }
    g.dense(prefix + ".fc1", kEmbeddingDim, 96)
        .relu()
        .dense(prefix + ".fc2", 96, 96)
        .relu()
        .dense(prefix + ".fc3", 96, data::kNumDirections);
    return g;
}

}  // namespace

const std::string& operator_kind_name(OperatorKind k) {
    return kOperatorNames[static_cast<int>(k)];
}

const std::string& heads_kind_name(HeadsKind k) { return kHeadsNames[static_cast<int>(k)]; }

OperatorKind parse_operator_kind(const std::string& s) {
    if (s == "average") return OperatorKind::Average;
    if (s == "cond_mlp") return OperatorKind::CondMlp;
    throw ConfigError("unknown combination operator '" + s + "' (average|cond_mlp)");
}

HeadsKind parse_heads_kind(const std::string& s) {
    if (s == "small") return HeadsKind::Small;
    if (s == "large") return HeadsKind::Large;
    throw ConfigError("unknown heads kind '" + s + "' (small|large)");
}

nn::LayerGraph encoder_graph(int in_channels) {
    if (in_channels < 1) throw ConfigError("encoder needs at least one input channel");
    nn::LayerGraph res1;
    res1.conv1d("enc.res1a", 32, 32, 3, 1, 1).relu().conv1d("enc.res1b", 32, 32, 3, 1, 1);
    nn::LayerGraph res2;
    res2.conv1d("enc.res2a", 64, 64, 3, 1, 1).relu().conv1d("enc.res2b", 64, 64, 3, 1, 1);
    nn::LayerGraph res3;
    res3.conv1d("enc.res3a", 64, 64, 3, 1, 1).relu().conv1d("enc.res3b", 64, 64, 3, 1, 1);

    nn::LayerGraph g;
    g.conv1d("enc.stem", in_channels, 32, 7, 2, 3)
        .relu()
        .residual(std::move(res1))
        .relu()
        .conv1d("enc.down1", 32, 64, 3, 2, 1)
        .relu()
        .residual(std::move(res2))
        .relu()
        .conv1d("enc.down2", 64, 64, 3, 2, 1)
        .relu()
        .residual(std::move(res3))
        .relu()
        .global_avg_pool()
        .dense("enc.fc", 64, kEmbeddingDim);
    return g;
}

nn::LayerGraph direction_head_graph(HeadsKind kind) { return head_graph("heads.dir", kind); }

nn::LayerGraph modifier_head_graph(HeadsKind kind) { return head_graph("heads.mod", kind); }

nn::LayerGraph cond_mlp_graph() {
    nn::LayerGraph g;
    g.dense("op.fc1", kCondMlpInputDim, kCondMlpHidden)
        .relu()
        .dense("op.fc2", kCondMlpHidden, kEmbeddingDim);
    return g;
}

Model make_model(const ModelSpec& spec) {
    Model m;
    m.spec = spec;
    m.encoder = encoder_graph(spec.in_channels);
    m.dir_head = direction_head_graph(spec.heads);
    m.mod_head = modifier_head_graph(spec.heads);
    if (spec.op == OperatorKind::CondMlp) m.op_body = cond_mlp_graph();
    return m;
}

void init_model_params(const Model& model, nn::ParameterSet& params, RngStream& rng) {
    RngStream enc = rng.fork("init-enc", 0);
    init_layer_params(model.encoder, params, enc);
    RngStream op = rng.fork("init-op", 0);
    init_layer_params(model.op_body, params, op);
    RngStream hd = rng.fork("init-heads-dir", 0);
    init_layer_params(model.dir_head, params, hd);
    RngStream hm = rng.fork("init-heads-mod", 0);
    init_layer_params(model.mod_head, params, hm);
}

std::size_t model_param_count(const Model& model) {
    return nn::layer_param_count(model.encoder) + nn::layer_param_count(model.op_body) +
           nn::layer_param_count(model.dir_head) + nn::layer_param_count(model.mod_head);
}

nn::Tensor batch_input(const std::vector<const data::Window*>& windows) {
    if (windows.empty()) throw ConfigError("cannot build an input batch from zero windows");
    const auto& shape0 = windows.front()->samples.shape;
    const int c = shape0.at(0);
    const int t = shape0.at(1);
    nn::Tensor batch({static_cast<int>(windows.size()), c, t});
    std::size_t offset = 0;
    for (const data::Window* w : windows) {
        if (w->samples.shape != shape0)
            throw ConfigError("windows in one batch must share [channels, samples], got " +
                              windows.front()->samples.shape_str() + " vs " +
                              w->samples.shape_str());
        for (float v : w->samples.values) batch.values[offset++] = v;
    }
    return batch;
}

nn::Tensor batch_input(const data::Dataset& ds, const data::IndexList& indices) {
    std::vector<const data::Window*> ptrs;
    ptrs.reserve(indices.size());
    for (int i : indices) ptrs.push_back(&ds.windows.at(static_cast<std::size_t>(i)));
    return batch_input(ptrs);
}

nn::Tensor encode_windows(const Model& model, const nn::ParameterSet& params,
                          const data::Dataset& ds, const data::IndexList& indices) {
    return nn::forward(model.encoder, params, batch_input(ds, indices));
}

namespace {

template <typename T>
nn::TensorT<T> onehot_rows(const std::vector<int>& hot, int width) {
    nn::TensorT<T> t({static_cast<int>(hot.size()), width});
    for (std::size_t r = 0; r < hot.size(); ++r)
        t.values[r * static_cast<std::size_t>(width) + static_cast<std::size_t>(hot[r])] = T(1);
    return t;
}

}  // namespace

template <typename T>
int combine_rows(nn::Tape<T>& tape, const Model& model, int z_dir,
                 const std::vector<data::Direction>& dirs, int z_mod,
                 const std::vector<data::Modifier>& mods) {
    const auto n = dirs.size();
    if (mods.size() != n)
        throw ConfigError("combine needs matching component counts, got " +
                          std::to_string(n) + " directions and " + std::to_string(mods.size()) +
                          " modifiers");
    if (n == 0) throw ConfigError("combine needs at least one row");
    const auto rows = [n](const nn::TensorT<T>& v) {
        return v.shape.size() == 2 && v.shape[0] == static_cast<int>(n) &&
               v.shape[1] == kEmbeddingDim;
    };
    if (!rows(tape.value(z_dir)) || !rows(tape.value(z_mod)))
        throw ConfigError("combine expects [" + std::to_string(n) + ", 64] embedding nodes");
    std::vector<int> dir_hot(n), mod_hot(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (dirs[i] == data::Direction::NoDir)
            throw LabelError("combine needs an active direction in every row");
        if (mods[i] == data::Modifier::NoMod)
            throw LabelError("combine needs an active modifier in every row");
        dir_hot[i] = static_cast<int>(dirs[i]);
        mod_hot[i] = static_cast<int>(mods[i]);
    }
    if (model.spec.op == OperatorKind::Average)
        return tape.scale(tape.add(z_dir, z_mod), 0.5);
    const int oh_dir =
        tape.input(onehot_rows<T>(dir_hot, data::kActiveDirections), "onehot_dir");
    const int oh_mod =
        tape.input(onehot_rows<T>(mod_hot, data::kActiveModifiers), "onehot_mod");
    const int x = tape.concat_cols({z_dir, oh_dir, z_mod, oh_mod});
    return nn::apply_layers(tape, model.op_body, x);
}

template <typename T>
int combine_all_pairs(nn::Tape<T>& tape, const Model& model, int z_dir,
                      const std::vector<data::Direction>& dirs, int z_mod,
                      const std::vector<data::Modifier>& mods,
                      std::vector<data::GestureLabel>* combo_labels) {
    if (dirs.empty() || mods.empty())
        throw ConfigError("combine_all_pairs needs at least one row per component");
    const int nd = static_cast<int>(dirs.size());
    const int nm = static_cast<int>(mods.size());
    const int zd_rep = tape.repeat_rows_each(z_dir, nm);
    const int zm_tile = tape.tile_rows(z_mod, nd);
    std::vector<data::Direction> dirs_rep;
    std::vector<data::Modifier> mods_tile;
    dirs_rep.reserve(static_cast<std::size_t>(nd) * static_cast<std::size_t>(nm));
    mods_tile.reserve(dirs_rep.capacity());
    for (int i = 0; i < nd; ++i)
        for (int j = 0; j < nm; ++j) {
            dirs_rep.push_back(dirs[static_cast<std::size_t>(i)]);
            mods_tile.push_back(mods[static_cast<std::size_t>(j)]);
        }
    if (combo_labels) {
        combo_labels->clear();
        combo_labels->reserve(dirs_rep.size());
        for (std::size_t k = 0; k < dirs_rep.size(); ++k)
            combo_labels->push_back({dirs_rep[k], mods_tile[k]});
    }
    return combine_rows(tape, model, zd_rep, dirs_rep, zm_tile, mods_tile);
}

template int combine_rows<float>(nn::Tape<float>&, const Model&, int,
                                 const std::vector<data::Direction>&, int,
                                 const std::vector<data::Modifier>&);
template int combine_rows<double>(nn::Tape<double>&, const Model&, int,
                                  const std::vector<data::Direction>&, int,
                                  const std::vector<data::Modifier>&);
template int combine_all_pairs<float>(nn::Tape<float>&, const Model&, int,
                                      const std::vector<data::Direction>&, int,
                                      const std::vector<data::Modifier>&,
                                      std::vector<data::GestureLabel>*);
template int combine_all_pairs<double>(nn::Tape<double>&, const Model&, int,
                                       const std::vector<data::Direction>&, int,
                                       const std::vector<data::Modifier>&,
                                       std::vector<data::GestureLabel>*);

}  // namespace comhom::model
