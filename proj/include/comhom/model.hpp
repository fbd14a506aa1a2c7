#pragma once

#include <string>
#include <vector>

#include "comhom/dataset.hpp"
#include "comhom/gesture.hpp"
#include "comhom/layers.hpp"
#include "comhom/tape.hpp"

namespace comhom::model {

inline constexpr int kEmbeddingDim = 64;

enum class OperatorKind { Average, CondMlp };
enum class HeadsKind { Small, Large };

const std::string& operator_kind_name(OperatorKind k);
const std::string& heads_kind_name(HeadsKind k);
OperatorKind parse_operator_kind(const std::string& s);
HeadsKind parse_heads_kind(const std::string& s);

// Feature encoder: strided conv stem, then three residual stages separated
// by downsampling convs, global average pooling over time, and a linear
// projection to the 64-d embedding. Parameters live under "enc.".
nn::LayerGraph encoder_graph(int in_channels);

// Per-component classifier heads over the embedding, 5 logits each (4
// active values plus the inactive marker). Small is one linear layer per
// head; Large is a two-hidden-layer MLP. Parameters live under
// "heads.dir." / "heads.mod.".
nn::LayerGraph direction_head_graph(HeadsKind kind);
nn::LayerGraph modifier_head_graph(HeadsKind kind);

// Conditioned-MLP combination operator body. Its input row is the
// concatenation [z_dir, onehot(direction), z_mod, onehot(modifier)];
// parameters live under "op.". The Average operator has no parameters.
inline constexpr int kCondMlpHidden = 85;
inline constexpr int kCondMlpInputDim =
    2 * kEmbeddingDim + data::kActiveDirections + data::kActiveModifiers;
nn::LayerGraph cond_mlp_graph();

struct ModelSpec {
    int in_channels = 8;
    OperatorKind op = OperatorKind::CondMlp;
    HeadsKind heads = HeadsKind::Small;
};

struct Model {
    ModelSpec spec;
    nn::LayerGraph encoder;
    nn::LayerGraph dir_head;
    nn::LayerGraph mod_head;
    nn::LayerGraph op_body;  // empty for Average
};

Model make_model(const ModelSpec& spec);

// Registers and initializes every parameter group on the set. Each group
// draws from its own forked stream, so e.g. swapping the operator leaves
// the encoder initialization unchanged.
void init_model_params(const Model& model, nn::ParameterSet& params, RngStream& rng);

std::size_t model_param_count(const Model& model);

// Stacks windows into the [n, channels, samples] batch the encoder consumes.
nn::Tensor batch_input(const std::vector<const data::Window*>& windows);
nn::Tensor batch_input(const data::Dataset& ds, const data::IndexList& indices);

// Encodes windows into [n, 64] embeddings; parameters stay untouched.
nn::Tensor encode_windows(const Model& model, const nn::ParameterSet& params,
                          const data::Dataset& ds, const data::IndexList& indices);

// Combines direction embedding rows with modifier embedding rows pairwise:
// output row i fuses z_dir row i with z_mod row i. Both nodes must be
// [n, 64] with n matching the label vectors; every direction must be active
// (not NoDir) and every modifier active (not NoMod), else LabelError.
template <typename T>
int combine_rows(nn::Tape<T>& tape, const Model& model, int z_dir,
                 const std::vector<data::Direction>& dirs, int z_mod,
                 const std::vector<data::Modifier>& mods);

// Every pairing of the direction rows with the modifier rows,
// direction-major: output row i * n_mod + j fuses dir row i with mod row j.
// Returns the [n_dir * n_mod, 64] node; combo_labels, when given, receives
// the combination label of every output row in order.
template <typename T>
int combine_all_pairs(nn::Tape<T>& tape, const Model& model, int z_dir,
                      const std::vector<data::Direction>& dirs, int z_mod,
                      const std::vector<data::Modifier>& mods,
                      std::vector<data::GestureLabel>* combo_labels = nullptr);

}  // namespace comhom::model
