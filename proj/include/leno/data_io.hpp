#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leno/sodnet.hpp"

namespace leno {

struct AttackMeta {
    std::string kind;
    double epsilon = 0;
    double step = 0;
    int iters = 0;
    std::string source_model_checksum;
};

// A sample is either clean or adversarial, never both. Adversarial samples
// record the clean sample they were derived from.
struct Provenance {
    bool adversarial = false;
    std::string source_id;
    AttackMeta attack;
};

struct Sample {
    std::string id;
    TensorF image;  // [3,H,W] in [0,1]
    TensorF mask;   // [1,H,W] in {0,1}
    Provenance provenance;
};

struct Dataset {
    std::vector<Sample> samples;

    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
};

// ---- PNG (8-bit) ----
void write_png_rgb(const std::filesystem::path& path, const TensorF& image);
void write_png_gray(const std::filesystem::path& path, const TensorF& map);
TensorF read_png_rgb(const std::filesystem::path& path);
TensorF read_png_gray(const std::filesystem::path& path);  // thresholded at 128 by caller

// ---- datasets ----
Dataset synth_generate(int count, int size, std::uint64_t seed,
                       const std::filesystem::path& out_dir);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
void save_sample(const Sample& s, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// ---- checkpoints ----
std::vector<unsigned char> serialize_checkpoint(const SodModelF& model);
void save_checkpoint(const SodModelF& model, const std::filesystem::path& path);
SodModelF load_checkpoint(const std::filesystem::path& path);
// Loads into an existing architecture; throws LoadError naming the first
// tensor whose name or shape does not line up.
void load_checkpoint_into(const std::filesystem::path& path, SodModelF& target);

// CRC32 (hex) over the serialized parameter payload; identifies the attack
// source model in adversarial manifests.
std::string model_checksum(const SodModelF& model);

ModelConfig checkpoint_config(const std::filesystem::path& path);

} // namespace leno
