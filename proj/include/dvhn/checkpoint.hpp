#pragma once

#include <filesystem>

#include <Eigen/Dense>

#include "dvhn/model.hpp"

namespace dvhn {

struct Checkpoint {
    ModelParams params;
    Eigen::MatrixXd classifier;  // W_h, K x C
};

/// DVHM layout: magic, u32 version, u32 M, M', K, C, adapter_depth, then every
/// weight and bias as row-major f32 in declaration order, then W_h (K x C).
/// Every adapter layer is rectified; saving a non-rectified adapter layer is
/// refused because the format has no field for it.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dvhn
