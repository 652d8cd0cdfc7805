#pragma once

#include "w4s/domain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace w4s {

struct Dataset {
    std::vector<Sample> samples;

    std::vector<Sample> split(Split which) const {
        std::vector<Sample> out;
        for (const auto& s : samples) {
            if (s.split == which) out.push_back(s);
        }
        return out;
    }
};

// One JSON object per line: {id?, input, gold, public_tests?, split}.
// With allow_unsplit, "validation"/"val" rows load as private_val so that
// split_validation can assign them.
inline Dataset load_dataset(const std::filesystem::path& path, TaskFamily family, bool allow_unsplit = false) {
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::DatasetMissing, "dataset not found: " + path.string());
    Dataset ds;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
            if (allow_unsplit && j.contains("split")) {
                const auto s = j["split"].get<std::string>();
                if (s == "validation" || s == "val") j["split"] = "private_val";
            }
            Sample s = j.get<Sample>();
            if (s.id.empty()) s.id = "s" + std::to_string(line_no);
            s.validate(family);
            ds.samples.push_back(std::move(s));
        } catch (const Json::exception& e) {
            throw Error(ErrorKind::DatasetMissing,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorKind::DatasetMissing,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (ds.samples.empty()) throw Error(ErrorKind::DatasetMissing, "dataset is empty: " + path.string());
    return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::string out;
    for (const auto& s : ds.samples) out += Json(s).dump() + "\n";
    write_text_file(path, out);
}

// Seeded shuffle, then the first round(n * ratio) samples become private and
// the rest public. Both halves keep their original relative order.
inline std::pair<std::vector<Sample>, std::vector<Sample>> split_validation(const std::vector<Sample>& validation,
                                                                            double ratio, std::uint64_t seed) {
    if (validation.size() < 2)
        throw Error(ErrorKind::TooFewSamples, "need at least 2 validation samples, got " +
                                                  std::to_string(validation.size()));
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorKind::InvalidValue, "split ratio must be in (0,1)");
    const std::size_t n = validation.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, "split_validation"));
    rng.shuffle(order);
    auto n_private = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
    n_private = std::clamp<std::size_t>(n_private, 1, n - 1);
    std::vector<bool> is_private(n, false);
    for (std::size_t i = 0; i < n_private; ++i) is_private[order[i]] = true;
    std::vector<Sample> priv, pub;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s = validation[i];
        s.split = is_private[i] ? Split::private_val : Split::public_val;
        (is_private[i] ? priv : pub).push_back(std::move(s));
    }
    return {std::move(priv), std::move(pub)};
}

struct TaskSplits {
    std::vector<Sample> private_val;
    std::vector<Sample> public_val;
    std::vector<Sample> test;
};

// Rows already assigned to private_val/public_val/test keep their split.
// Rows marked "validation" (or "val") are divided by split_validation and
// appended to the two validation halves.
inline TaskSplits load_task_splits(const std::filesystem::path& path, TaskFamily family, double ratio,
                                   std::uint64_t seed) {
    const Dataset ds = load_dataset(path, family, true);
    std::vector<bool> unsplit;
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        const Json j = Json::parse(line);
        const std::string s = j.value("split", "");
        unsplit.push_back(s == "validation" || s == "val");
    }
    TaskSplits out;
    std::vector<Sample> pool;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        if (unsplit[i]) pool.push_back(s);
        else if (s.split == Split::private_val) out.private_val.push_back(s);
        else if (s.split == Split::public_val) out.public_val.push_back(s);
        else out.test.push_back(s);
    }
    if (!pool.empty()) {
        auto [priv, pub] = split_validation(pool, ratio, seed);
        out.private_val.insert(out.private_val.end(), priv.begin(), priv.end());
        out.public_val.insert(out.public_val.end(), pub.begin(), pub.end());
    }
    return out;
}

}  // namespace w4s
