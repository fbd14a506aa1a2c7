#include "comhom/synth.hpp"

#include <cmath>
#include <numbers>

#include "comhom/error.hpp"

namespace comhom::data {

namespace {

// Smooth multi-channel signal: a few random harmonics per channel,
// normalized to unit RMS over the whole template.
nn::Tensor make_template(int channels, int samples, RngStream rng) {
    nn::Tensor t({channels, samples});
    for (int c = 0; c < channels; ++c) {
        float* row = t.data() + static_cast<std::size_t>(c) * samples;
        for (int h = 1; h <= 3; ++h) {
            const double freq = 0.5 + rng.uniform() * 5.5;  // cycles per window
            const double phase = rng.uniform() * 2.0 * std::numbers::pi;
            const double amp = (0.6 + 0.8 * rng.uniform()) / h;
            for (int i = 0; i < samples; ++i)
                row[i] += static_cast<float>(
                    amp * std::sin(2.0 * std::numbers::pi * freq * i / samples + phase));
        }
    }
    double sq = 0.0;
    for (const float v : t.values) sq += static_cast<double>(v) * v;
    const double rms = std::sqrt(sq / static_cast<double>(t.numel()));
    for (float& v : t.values) v = static_cast<float>(v / rms);
    return t;
}

// Near-identity channel mixing: I + strength * G / sqrt(C).
std::vector<float> make_mixing(int channels, double strength, RngStream rng) {
    std::vector<float> m(static_cast<std::size_t>(channels) * channels, 0.0f);
    const double scale = strength / std::sqrt(static_cast<double>(channels));
    for (int r = 0; r < channels; ++r)
        for (int c = 0; c < channels; ++c)
            m[static_cast<std::size_t>(r) * channels + c] =
                static_cast<float>((r == c ? 1.0 : 0.0) + scale * rng.normal());
    return m;
}

nn::Tensor apply_mixing(const std::vector<float>& m, const nn::Tensor& x) {
    const int channels = x.dim(0), samples = x.dim(1);
    nn::Tensor y({channels, samples});
    for (int r = 0; r < channels; ++r) {
        float* yr = y.data() + static_cast<std::size_t>(r) * samples;
        for (int c = 0; c < channels; ++c) {
            const float w = m[static_cast<std::size_t>(r) * channels + c];
            const float* xr = x.data() + static_cast<std::size_t>(c) * samples;
            for (int i = 0; i < samples; ++i) yr[i] += w * xr[i];
        }
    }
    return y;
}

}  // namespace

Dataset generate_synth_cohort(const SynthCohortSpec& spec, std::uint64_t seed) {
    if (spec.subjects < 3) throw ConfigError("synth cohort needs at least 3 subjects");
    if (spec.singles_per_class < 1 || spec.combos_per_class < 1)
        throw ConfigError("synth cohort needs at least 1 window per class");
    if (spec.channels < 1 || spec.samples_per_window < 8)
        throw ConfigError("synth cohort needs channels >= 1 and samples >= 8");
    if (spec.template_noise_scale < 0.0 || spec.subject_mixing_strength < 0.0 ||
        spec.nonlinearity_gain < 0.0)
        throw ConfigError("synth cohort scales must be non-negative");

    const RngStream root(seed, "synth-cohort");

    // Global templates for the 8 single classes (fixed class order).
    std::vector<nn::Tensor> templates;
    templates.reserve(8);
    for (int cls = 0; cls < 8; ++cls)
        templates.push_back(make_template(spec.channels, spec.samples_per_window,
                                          root.fork("template", static_cast<std::uint64_t>(cls))));

    // Class-dependent combination gains, shared across subjects.
    std::vector<std::pair<float, float>> gains(kNumComboClasses);
    for (int cc = 0; cc < kNumComboClasses; ++cc) {
        RngStream gr = root.fork("gains", static_cast<std::uint64_t>(cc));
        gains[static_cast<std::size_t>(cc)] = {
            static_cast<float>(spec.nonlinearity_gain * (0.9 + 0.2 * gr.uniform())),
            static_cast<float>(spec.nonlinearity_gain * (0.9 + 0.2 * gr.uniform()))};
    }

    Dataset ds;
    ds.channels = spec.channels;
    ds.window_samples = spec.samples_per_window;
    ds.sample_rate_hz = 2 * spec.samples_per_window;  // windows nominally span 500 ms

    for (int subj = 0; subj < spec.subjects; ++subj) {
        const std::vector<float> mixing = make_mixing(
            spec.channels, spec.subject_mixing_strength,
            root.fork("mixing", static_cast<std::uint64_t>(subj)));
        RngStream noise = root.fork("noise", static_cast<std::uint64_t>(subj));

        for (int cls = 0; cls < kNumStoredClasses; ++cls) {
            const GestureLabel label = label_from_class_index(cls);
            const int count = cls < 8 ? spec.singles_per_class : spec.combos_per_class;

            nn::Tensor base;
            if (label.is_single()) {
                const int tmpl = label.is_direction_single()
                                     ? static_cast<int>(label.direction)
                                     : 4 + static_cast<int>(label.modifier);
                base = templates[static_cast<std::size_t>(tmpl)];
            } else {
                const auto [g_dir, g_mod] = gains[static_cast<std::size_t>(combo_class_index(label))];
                const nn::Tensor& td = templates[static_cast<std::size_t>(label.direction)];
                const nn::Tensor& tm = templates[static_cast<std::size_t>(4 + static_cast<int>(label.modifier))];
                base = nn::Tensor({spec.channels, spec.samples_per_window});
                for (std::size_t i = 0; i < base.numel(); ++i)
                    base.values[i] = std::tanh(g_dir * td.values[i] + g_mod * tm.values[i]);
            }
            const nn::Tensor mixed = apply_mixing(mixing, base);

            for (int k = 0; k < count; ++k) {
                Window w;
                w.subject = subj;
                w.label = label;
                w.samples = mixed;
                for (float& v : w.samples.values)
                    v += static_cast<float>(spec.template_noise_scale * noise.normal());
                ds.windows.push_back(std::move(w));
            }
        }
    }
    return ds;
}

}  // namespace comhom::data
