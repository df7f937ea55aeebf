#pragma once

#include <string>
#include <vector>

#include "es/dataset.hpp"

namespace es {

// IDX (big-endian): image magic 0x00000803 with dims (count, rows, cols),
// label magic 0x00000801 with dims (count). Pixels rescale from bytes to [0,1].
LabeledDataset load_idx_corpus(const std::string& image_path, const std::string& label_path);
void save_idx_corpus(const LabeledDataset& ds, const std::string& image_path, const std::string& label_path);

// CIFAR binary batches: 3073-byte records, 1 label byte + 3x32x32 pixel bytes.
LabeledDataset load_cifar_corpus(const std::vector<std::string>& batch_paths);

// Expanded-dataset container:
// "EXPS" | u16 version | u16 C | u64 count | u16 channels | u16 height |
// u16 width | u8 dtype(0 = f32 LE) | u16 labels[count] | f32 payload row-major.
void save_expanded(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_expanded(const std::string& path);

} // namespace es
