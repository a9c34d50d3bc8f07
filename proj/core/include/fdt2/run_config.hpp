#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fdt2/flow.hpp"
#include "fdt2/model.hpp"
#include "fdt2/synthetic_task.hpp"

namespace fdt2 {

struct ConfigKey {
    std::string_view name;
    std::string_view default_value;
    std::string_view help;
};

// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Flat `key = value` settings with `#` comments. Unknown keys, duplicate keys
// and malformed lines raise ConfigError.
class RunConfig {
public:
    // All keys at their defaults.
    RunConfig();

    static RunConfig parse(std::string_view text, std::string_view origin = "<config>");
    static RunConfig load(const std::filesystem::path& path);

    // Override one key; rejects unknown keys.
    void set(std::string_view key, std::string_view value);
    // Parses "key=value".
    void set_assignment(std::string_view assignment);

    const std::string& get(std::string_view key) const;
    std::int64_t get_int(std::string_view key) const;
    std::size_t get_size(std::string_view key) const;
    std::uint64_t get_u64(std::string_view key) const;
    Real get_real(std::string_view key) const;
    bool get_bool(std::string_view key) const;

    const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

    // Serializes every key in documentation order; parse(to_text()) round-trips.
    std::string to_text() const;

    ModelConfig model_config() const;
    SyntheticTask task() const;
    TrainOptions train_options() const;
    std::uint64_t seed() const { return get_u64("seed"); }
    int steps() const;

private:
    std::map<std::string, std::string, std::less<>> values_;
};

// "ref:16,traj:16" -> segments.
std::vector<Segment> parse_segments(std::string_view text);
// "0,3,5" -> indices.
std::vector<std::size_t> parse_index_list(std::string_view text);

}  // namespace fdt2
