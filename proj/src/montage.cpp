#include "fast/montage.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace fast::montage {

namespace {

const char* kStandard62Labels[] = {
    "Fp1", "Fp2", "AF7", "AF3", "AF4", "AF8", "F7",  "F5",  "F3",   "F1",  "Fz",  "F2",  "F4",
    "F6",  "F8",  "FT9", "FT7", "FC5", "FC3", "FC1", "FC2", "FC4",  "FC6", "FT8", "FT10", "T7",
    "C5",  "C3",  "C1",  "Cz",  "C2",  "C4",  "C6",  "T8",  "TP9",  "TP7", "CP5", "CP3", "CP1",
    "CPz", "CP2", "CP4", "CP6", "TP8", "TP10", "P7", "P5",  "P3",   "P1",  "Pz",  "P2",  "P4",
    "P6",  "P8",  "PO7", "PO3", "POz", "PO4", "PO8", "O1",  "Oz",   "O2"};

struct LabelParts {
    std::string row;   // e.g. "FC", "Fp", "PO"
    int number = -1;   // -1 for midline
    bool midline = false;
};

LabelParts parse_label(const std::string& label) {
    size_t i = label.size();
    while (i > 0 && std::isdigit(static_cast<unsigned char>(label[i - 1]))) --i;
    LabelParts p;
    if (i < label.size()) {
        p.row = label.substr(0, i);
        p.number = std::stoi(label.substr(i));
    } else if (!label.empty() && (label.back() == 'z' || label.back() == 'Z')) {
        p.row = label.substr(0, label.size() - 1);
        p.midline = true;
    } else {
        p.row = label;
    }
    return p;
}

std::string config_region_for_m8(PartitionConfig config, const std::string& m8) {
    // Merge chain: M8 -> M5 -> M4 -> M3 (each region a union of the previous
    // level's regions). M2/M1 keep a subset of the M8 regions; "" = dropped.
    auto m5 = [&]() -> std::string {
        if (m8 == "prefrontal" || m8 == "frontal") return "frontal";
        if (m8 == "left_temporal" || m8 == "right_temporal") return "temporal";
        if (m8 == "precentral" || m8 == "postcentral") return "central";
        return m8;  // parietal, occipital
    };
    switch (config) {
        case PartitionConfig::M8:
            return m8;
        case PartitionConfig::M5:
            return m5();
        case PartitionConfig::M4: {
            std::string r = m5();
            return r == "parietal" ? "occipital" : r;
        }
        case PartitionConfig::M3: {
            std::string r = m5();
            if (r == "parietal") r = "occipital";
            if (r == "temporal") r = "central";
            return r;
        }
        case PartitionConfig::M2_FT:
            if (m8 == "frontal") return "frontal";
            if (m8 == "left_temporal" || m8 == "right_temporal") return "temporal";
            return "";
        case PartitionConfig::M1_F:
            return m8 == "frontal" ? "frontal" : "";
        case PartitionConfig::M1_T:
            return (m8 == "left_temporal" || m8 == "right_temporal") ? "temporal" : "";
    }
    return "";
}

std::vector<std::string> canonical_region_order(PartitionConfig config) {
    switch (config) {
        case PartitionConfig::M8:
            return {"prefrontal", "frontal",     "left_temporal", "right_temporal",
                    "precentral", "postcentral", "parietal",      "occipital"};
        case PartitionConfig::M5:
            return {"frontal", "temporal", "central", "parietal", "occipital"};
        case PartitionConfig::M4:
            return {"frontal", "temporal", "central", "occipital"};
        case PartitionConfig::M3:
            return {"frontal", "central", "occipital"};
        case PartitionConfig::M2_FT:
            return {"frontal", "temporal"};
        case PartitionConfig::M1_F:
            return {"frontal"};
        case PartitionConfig::M1_T:
            return {"temporal"};
    }
    return {};
}

RegionPartition assemble(PartitionConfig config, const ChannelLayout& layout,
                         const std::vector<std::string>& region_of_channel,
                         std::vector<std::string> region_order) {
    RegionPartition p;
    p.config = config;
    p.region_names = std::move(region_order);
    p.region_channels.assign(p.region_names.size(), {});
    for (size_t ci = 0; ci < region_of_channel.size(); ++ci) {
        const std::string& r = region_of_channel[ci];
        if (r.empty()) continue;  // dropped (M2/M1 configs)
        auto it = std::find(p.region_names.begin(), p.region_names.end(), r);
        if (it == p.region_names.end())
            throw ConfigError("partition: unexpected region '" + r + "'");
        p.region_channels[static_cast<size_t>(it - p.region_names.begin())].push_back(
            static_cast<int>(ci));
    }
    for (size_t ri = 0; ri < p.region_names.size(); ++ri) {
        auto& chans = p.region_channels[ri];
        if (chans.empty())
            throw ConfigError("partition " + partition_config_name(config) + ": region '" +
                              p.region_names[ri] + "' has no channels");
        // Canonical within-region order: lexicographic by label, so block
        // contents do not depend on the layout's channel ordering.
        std::sort(chans.begin(), chans.end(), [&](int a, int b) {
            return layout.labels[static_cast<size_t>(a)] < layout.labels[static_cast<size_t>(b)];
        });
    }
    return p;
}

}  // namespace

int ChannelLayout::index_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    throw ConfigError("layout: unknown channel '" + label + "'");
}

PartitionConfig parse_partition_config(const std::string& id) {
    if (id == "M8") return PartitionConfig::M8;
    if (id == "M5") return PartitionConfig::M5;
    if (id == "M4") return PartitionConfig::M4;
    if (id == "M3") return PartitionConfig::M3;
    if (id == "M2_FT") return PartitionConfig::M2_FT;
    if (id == "M1_F") return PartitionConfig::M1_F;
    if (id == "M1_T") return PartitionConfig::M1_T;
    throw ConfigError("unknown partition config '" + id +
                      "' (expected M8|M5|M4|M3|M2_FT|M1_F|M1_T)");
}

std::string partition_config_name(PartitionConfig c) {
    switch (c) {
        case PartitionConfig::M8: return "M8";
        case PartitionConfig::M5: return "M5";
        case PartitionConfig::M4: return "M4";
        case PartitionConfig::M3: return "M3";
        case PartitionConfig::M2_FT: return "M2_FT";
        case PartitionConfig::M1_F: return "M1_F";
        case PartitionConfig::M1_T: return "M1_T";
    }
    return "?";
}

std::vector<std::string> RegionPartition::member_labels() const {
    std::vector<std::string> out;
    for (const auto& r : region_channels)
        for (int idx : r) out.push_back(std::to_string(idx));
    return out;
}

std::vector<int> RegionPartition::channel_counts() const {
    std::vector<int> out;
    for (const auto& r : region_channels) out.push_back(static_cast<int>(r.size()));
    return out;
}

ChannelLayout make_layout(std::vector<std::string> labels, std::string reference, std::string ground) {
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (!seen.insert(l).second) throw ConfigError("layout: duplicate channel '" + l + "'");
        if (l == reference) throw ConfigError("layout: reference '" + l + "' listed as data channel");
        if (l == ground) throw ConfigError("layout: ground '" + l + "' listed as data channel");
    }
    if (labels.empty()) throw ConfigError("layout: no data channels");
    return ChannelLayout{std::move(labels), std::move(reference), std::move(ground)};
}

ChannelLayout load_layout(const std::string& text) {
    std::vector<std::string> labels;
    std::string reference, ground;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string a, b;
        ls >> a >> b;
        if (a == "reference")
            reference = b;
        else if (a == "ground")
            ground = b;
        else
            labels.push_back(a);
    }
    return make_layout(std::move(labels), std::move(reference), std::move(ground));
}

ChannelLayout load_layout_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open layout file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_layout(ss.str());
}

std::string layout_to_text(const ChannelLayout& layout) {
    std::string out = "# layout\nreference " + layout.reference + "\nground " + layout.ground + "\n";
    for (const auto& l : layout.labels) out += l + "\n";
    return out;
}

const ChannelLayout& standard62() {
    static const ChannelLayout layout = [] {
        std::vector<std::string> labels(std::begin(kStandard62Labels), std::end(kStandard62Labels));
        return make_layout(std::move(labels), "FCz", "AFz");
    }();
    return layout;
}

std::string m8_region_for_label(const std::string& label) {
    const LabelParts p = parse_label(label);
    const std::string& row = p.row;
    if (row == "Fp" || row == "FP" || row == "AF") return "prefrontal";
    if (row == "F") return "frontal";
    if (row == "FT" || row == "T" || row == "TP") {
        if (p.midline || p.number < 0)
            throw ConfigError("montage: no region rule for midline temporal '" + label + "'");
        return (p.number % 2 == 1) ? "left_temporal" : "right_temporal";
    }
    if (row == "FC") return "precentral";
    if (row == "C") return "postcentral";
    if (row == "CP" || row == "P") return "parietal";
    if (row == "PO" || row == "O") return "occipital";
    throw ConfigError("montage: no region rule for channel '" + label + "'");
}

RegionPartition build_partition(const ChannelLayout& layout, PartitionConfig config) {
    std::vector<std::string> region_of_channel;
    region_of_channel.reserve(layout.labels.size());
    for (const auto& l : layout.labels)
        region_of_channel.push_back(config_region_for_m8(config, m8_region_for_label(l)));
    return assemble(config, layout, region_of_channel, canonical_region_order(config));
}

RegionPartition load_partition(const std::string& text, const ChannelLayout& layout) {
    std::istringstream in(text);
    std::string line;
    PartitionConfig config = PartitionConfig::M8;
    bool have_header = false;
    std::vector<std::string> region_of_channel(layout.labels.size());
    std::vector<std::string> region_order;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string kw, id;
            hs >> kw >> id;
            if (kw == "partition") {
                config = parse_partition_config(id);
                have_header = true;
            }
            continue;
        }
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError("partition file: expected label<TAB>region, got '" + line + "'");
        const std::string label = line.substr(0, tab);
        const std::string region = line.substr(tab + 1);
        const int idx = layout.index_of(label);
        if (!region_of_channel[static_cast<size_t>(idx)].empty())
            throw FormatError("partition file: duplicate channel '" + label + "'");
        region_of_channel[static_cast<size_t>(idx)] = region;
        if (std::find(region_order.begin(), region_order.end(), region) == region_order.end())
            region_order.push_back(region);
    }
    if (!have_header) throw FormatError("partition file: missing '# partition <CONFIG>' header");
    const size_t want = canonical_region_order(config).size();
    if (region_order.size() != want)
        throw FormatError("partition file: config " + partition_config_name(config) + " expects " +
                          std::to_string(want) + " regions, file has " +
                          std::to_string(region_order.size()));
    return assemble(config, layout, region_of_channel, std::move(region_order));
}

RegionPartition load_partition_file(const std::string& path, const ChannelLayout& layout) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open partition file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_partition(ss.str(), layout);
}

std::string partition_to_text(const RegionPartition& p, const ChannelLayout& layout) {
    std::string out = "# partition " + partition_config_name(p.config) + "\n";
    for (size_t ri = 0; ri < p.region_names.size(); ++ri)
        for (int ci : p.region_channels[ri])
            out += layout.labels[static_cast<size_t>(ci)] + "\t" + p.region_names[ri] + "\n";
    return out;
}

std::vector<RegionBlock> apply_partition(const RegionPartition& p, const ChannelLayout& layout,
                                         const TensorF& segment) {
    if (segment.rank() != 2 || segment.extent(0) != layout.channel_count())
        throw ShapeError("apply_partition: segment has " +
                         std::to_string(segment.rank() == 2 ? segment.extent(0) : -1) +
                         " channels, layout has " + std::to_string(layout.channel_count()));
    const int samples = segment.extent(1);
    std::vector<RegionBlock> blocks;
    blocks.reserve(p.region_names.size());
    for (size_t ri = 0; ri < p.region_names.size(); ++ri) {
        RegionBlock b;
        b.region = p.region_names[ri];
        b.data = TensorF({static_cast<int>(p.region_channels[ri].size()), samples});
        int row = 0;
        for (int ci : p.region_channels[ri]) {
            b.labels.push_back(layout.labels[static_cast<size_t>(ci)]);
            for (int t = 0; t < samples; ++t) b.data.at(row, t) = segment.at(ci, t);
            ++row;
        }
        blocks.push_back(std::move(b));
    }
    return blocks;
}

}  // namespace fast::montage
