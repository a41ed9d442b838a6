#pragma once

#include <map>
#include <string>
#include <vector>

#include "fast/tensor.hpp"

namespace fast::montage {

// 10-10 scalp layout: ordered data-channel labels with the reference and
// ground electrodes excluded from the data channels.
struct ChannelLayout {
    std::vector<std::string> labels;
    std::string reference;
    std::string ground;

    int channel_count() const { return static_cast<int>(labels.size()); }
    int index_of(const std::string& label) const;
};

enum class PartitionConfig { M8, M5, M4, M3, M2_FT, M1_F, M1_T };

PartitionConfig parse_partition_config(const std::string& id);
std::string partition_config_name(PartitionConfig c);

// The partition function P: maps each data channel to one of M functional
// areas. M2/M1 configs cover only a subset of channels; the rest are dropped.
struct RegionPartition {
    PartitionConfig config;
    std::vector<std::string> region_names;               // canonical region order
    std::vector<std::vector<int>> region_channels;       // layout indices per region,
                                                         // sorted by channel label
    std::vector<std::string> member_labels() const;
    int region_count() const { return static_cast<int>(region_names.size()); }
    std::vector<int> channel_counts() const;
};

// One region's slice of a segment: rows follow the partition's per-region
// channel order.
struct RegionBlock {
    std::string region;
    std::vector<std::string> labels;
    TensorF data;  // channels x samples
};

// Build a layout from explicit pieces, validating uniqueness and that the
// reference/ground do not appear as data channels.
ChannelLayout make_layout(std::vector<std::string> labels, std::string reference, std::string ground);

// Parse the plain-text layout asset (reference/ground lines + one label per line).
ChannelLayout load_layout(const std::string& text);
ChannelLayout load_layout_file(const std::string& path);
std::string layout_to_text(const ChannelLayout& layout);

// The built-in 62-channel cap: 64 ring electrodes minus FCz (reference) and
// AFz (ground).
const ChannelLayout& standard62();

// Assign a 10-10 label to an M8 region by prefix. Throws if no rule applies.
std::string m8_region_for_label(const std::string& label);

// Construct the partition for a config from the layout via the prefix rules.
RegionPartition build_partition(const ChannelLayout& layout, PartitionConfig config);

// Partition asset file: "# partition <CONFIG>" header then label<TAB>region rows.
RegionPartition load_partition(const std::string& text, const ChannelLayout& layout);
RegionPartition load_partition_file(const std::string& path, const ChannelLayout& layout);
std::string partition_to_text(const RegionPartition& p, const ChannelLayout& layout);

// Split one segment (channels x samples, rows in layout order) into per-region
// blocks in the partition's canonical region order.
std::vector<RegionBlock> apply_partition(const RegionPartition& p, const ChannelLayout& layout,
                                         const TensorF& segment);

}  // namespace fast::montage
