#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "hhhfl/data.hpp"
#include "hhhfl/errors.hpp"
#include "hhhfl/rng.hpp"

using namespace hhhfl;

namespace {

std::map<DeviceKind, DeviceConfig> all_default_configs() {
    std::map<DeviceKind, DeviceConfig> configs;
    for (DeviceKind device : kAllDevices) {
        configs.emplace(device, default_device_config(device));
    }
    return configs;
}

EegRecord record_for(DeviceKind device, const std::string& channel,
                     std::int64_t event_id, int code, std::vector<double> samples) {
    EegRecord rec;
    rec.record_id = event_id * 100 + static_cast<std::int64_t>(channel.size());
    rec.event_id = event_id;
    rec.device = device;
    rec.channel = channel;
    rec.code = code;
    rec.size = samples.size();
    rec.samples = std::move(samples);
    return rec;
}

std::vector<double> ramp(std::size_t n, double start = 0.0, double step = 1.0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + step * static_cast<double>(i);
    return v;
}

} // namespace

TEST_CASE("parse_mindbigdata_line happy path") {
    const EegRecord rec = parse_mindbigdata_line("1\t10\tMW\tFP1\t5\t3\t1.0,2.0,3.0");
    CHECK(rec.record_id == 1);
    CHECK(rec.event_id == 10);
    CHECK(rec.device == DeviceKind::MW);
    CHECK(rec.channel == "FP1");
    CHECK(rec.code == 5);
    CHECK(rec.size == 3);
    CHECK(rec.samples == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("parse_mindbigdata_line tolerates spaces and CRLF") {
    const EegRecord rec = parse_mindbigdata_line("1\t10\tMU\tTP9\t-1\t3\t 1.5, 2.5 ,3.5 \r\n");
    CHECK(rec.device == DeviceKind::MU);
    CHECK(rec.code == -1);
    CHECK(rec.samples == std::vector<double>{1.5, 2.5, 3.5});
}

TEST_CASE("parse_mindbigdata_line typed failures") {
    CHECK_THROWS_AS(parse_mindbigdata_line("1\t10\tXX\tFP1\t5\t3\t1,2,3"), parse_error);
    CHECK_THROWS_AS(parse_mindbigdata_line("1\t10\tMW\tFP1\t5\t4\t1,2,3"), parse_error);
    CHECK_THROWS_AS(parse_mindbigdata_line("1\t10\tMW\tFP1\t10\t3\t1,2,3"), parse_error);
    CHECK_THROWS_AS(parse_mindbigdata_line("1\t10\tMW\tFP1\t5\t3"), parse_error);
    CHECK_THROWS_AS(parse_mindbigdata_line("1\t10\tMW\tFP1\t5\t3\t1,x,3"), parse_error);
    try {
        parse_mindbigdata_line("1\t10\tXX\tFP1\t5\t3\t1,2,3", 42);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line == 42);
        CHECK(std::string(e.what()).find("42") != std::string::npos);
    }
}

TEST_CASE("record round-trip reproduces the canonical line") {
    const std::string canonical = "1\t10\tMW\tFP1\t5\t3\t1,2.5,-3.25";
    CHECK(serialize_record(parse_mindbigdata_line(canonical)) == canonical);
    // Non-canonical decimal spellings converge to the canonical form once.
    const std::string messy = "1\t10\tMW\tFP1\t5\t3\t 1.0 ,2.50,-3.250";
    const std::string once = serialize_record(parse_mindbigdata_line(messy));
    CHECK(once == canonical);
    CHECK(serialize_record(parse_mindbigdata_line(once)) == once);
}

TEST_CASE("record round-trip is value-exact for random records") {
    Rng rng(mix_seed({0x22}));
    for (int i = 0; i < 100; ++i) {
        EegRecord rec;
        rec.record_id = static_cast<std::int64_t>(rng.index(1'000'000));
        rec.event_id = static_cast<std::int64_t>(rng.index(1'000'000));
        rec.device = kAllDevices[rng.index(3)];
        rec.channel = "C" + std::to_string(rng.index(32));
        rec.code = static_cast<int>(rng.index(11)) - 1;
        const std::size_t n = 1 + rng.index(16);
        for (std::size_t s = 0; s < n; ++s) {
            rec.samples.push_back(rng.normal() * std::pow(10.0, rng.uniform(-3, 3)));
        }
        rec.size = rec.samples.size();
        const EegRecord back = parse_mindbigdata_line(serialize_record(rec));
        CHECK(back == rec);
    }
}

TEST_CASE("assemble_events groups complete events") {
    auto configs = all_default_configs();
    std::vector<EegRecord> records;
    for (const std::string& ch : configs.at(DeviceKind::MU).channel_names) {
        records.push_back(record_for(DeviceKind::MU, ch, 7, 3, ramp(8)));
    }
    const AssemblyResult result = assemble_events(records, configs);
    REQUIRE(result.events.size() == 1);
    CHECK(result.events[0].device == DeviceKind::MU);
    CHECK(result.events[0].code == 3);
    CHECK(result.events[0].channels.size() == 4);
    CHECK(result.stats.events == 1);
}

TEST_CASE("assemble_events drops incomplete and conflicting groups") {
    auto configs = all_default_configs();
    std::vector<EegRecord> records;
    // Three of four MU channels.
    records.push_back(record_for(DeviceKind::MU, "TP9", 1, 3, ramp(4)));
    records.push_back(record_for(DeviceKind::MU, "FP1", 1, 3, ramp(4)));
    records.push_back(record_for(DeviceKind::MU, "FP2", 1, 3, ramp(4)));
    // Conflicting codes on MW event 2.
    records.push_back(record_for(DeviceKind::MW, "FP1", 2, 3, ramp(4)));
    records.push_back(record_for(DeviceKind::MW, "FP1", 2, 4, ramp(4)));
    // Unknown channel record.
    records.push_back(record_for(DeviceKind::MW, "ZZ9", 3, 1, ramp(4)));
    const AssemblyResult result = assemble_events(records, configs);
    CHECK(result.events.empty());
    CHECK(result.stats.dropped_incomplete == 1);
    // The MW pair shares a channel, which also makes it a duplicate; the
    // duplicate check runs first.
    CHECK(result.stats.dropped_duplicate_channel == 1);
    CHECK(result.stats.skipped_unknown_channel == 1);
}

TEST_CASE("assemble_events counts code conflicts across channels") {
    auto configs = all_default_configs();
    std::vector<EegRecord> records;
    const auto& names = configs.at(DeviceKind::MU).channel_names;
    for (std::size_t i = 0; i < names.size(); ++i) {
        records.push_back(record_for(DeviceKind::MU, names[i], 1,
                                     i == 0 ? 3 : 5, ramp(4)));
    }
    const AssemblyResult result = assemble_events(records, configs);
    CHECK(result.events.empty());
    CHECK(result.stats.dropped_code_conflict == 1);
}

TEST_CASE("preprocess constant signal gives zero features of the right length") {
    auto configs = all_default_configs();
    for (DeviceKind device : kAllDevices) {
        const DeviceConfig& cfg = configs.at(device);
        EegEvent event;
        event.device = device;
        event.code = 2;
        for (const std::string& ch : cfg.channel_names) {
            event.channels[ch] = std::vector<double>(100, 7.5);
        }
        const LabeledExample ex = preprocess(event, cfg);
        CHECK(ex.features.size() == cfg.input_dim);
        CHECK(ex.label == 1);
        for (double v : ex.features) CHECK(v == 0.0);
    }
}

TEST_CASE("preprocess identity resampling for matching MW lengths") {
    const DeviceConfig cfg = default_device_config(DeviceKind::MW);
    EegEvent event;
    event.device = DeviceKind::MW;
    event.code = -1;
    event.channels["FP1"] = ramp(1024, 0.0, 0.25);
    const LabeledExample ex = preprocess(event, cfg);
    CHECK(ex.label == 0);
    REQUIRE(ex.features.size() == 1024);
    // z-normalized copy of the original: same values after undoing the
    // normalization.
    const auto& raw = event.channels.at("FP1");
    const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / 1024.0;
    double var = 0.0;
    for (double v : raw) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / 1024.0);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(ex.features[i] == doctest::Approx((raw[i] - mean) / sd).epsilon(1e-12));
    }
}

TEST_CASE("preprocess MU ragged channel lengths hit exactly 512") {
    const DeviceConfig cfg = default_device_config(DeviceKind::MU);
    EegEvent event;
    event.device = DeviceKind::MU;
    event.code = 0;
    const std::size_t lens[] = {440, 441, 439, 440};
    for (std::size_t i = 0; i < 4; ++i) {
        event.channels[cfg.channel_names[i]] = ramp(lens[i], 0.0, 0.5);
    }
    const LabeledExample ex = preprocess(event, cfg);
    CHECK(ex.features.size() == 512);
}

TEST_CASE("preprocess z-normalizes within 1e-9") {
    Rng rng(mix_seed({0x99}));
    const DeviceConfig cfg = default_device_config(DeviceKind::EP);
    EegEvent event;
    event.device = DeviceKind::EP;
    event.code = 4;
    for (const std::string& ch : cfg.channel_names) {
        std::vector<double> samples(260);
        for (double& v : samples) v = 40.0 + 3.0 * rng.normal();
        event.channels[ch] = std::move(samples);
    }
    const LabeledExample ex = preprocess(event, cfg);
    double mean = 0.0;
    for (double v : ex.features) mean += v;
    mean /= static_cast<double>(ex.features.size());
    double var = 0.0;
    for (double v : ex.features) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(ex.features.size()));
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(sd - 1.0) < 1e-9);
}

TEST_CASE("preprocess rejects empty channels and device mismatches") {
    const DeviceConfig cfg = default_device_config(DeviceKind::MW);
    EegEvent event;
    event.device = DeviceKind::MW;
    event.channels["FP1"] = {};
    CHECK_THROWS_AS(preprocess(event, cfg), data_error);
    event.device = DeviceKind::MU;
    CHECK_THROWS_AS(preprocess(event, cfg), config_error);
}

TEST_CASE("resample_linear endpoints and identity") {
    const std::vector<double> x = {0, 1, 2, 3};
    CHECK(resample_linear(x, 4) == x);
    const std::vector<double> up = resample_linear(x, 7);
    CHECK(up.front() == 0.0);
    CHECK(up.back() == 3.0);
    CHECK(up[2] == doctest::Approx(1.0));
    CHECK(resample_linear({5.0}, 3) == std::vector<double>{5, 5, 5});
}

TEST_CASE("split_dataset counts on the 10-example case") {
    std::map<DeviceKind, std::vector<LabeledExample>> examples;
    for (int i = 0; i < 10; ++i) {
        LabeledExample ex;
        ex.device = DeviceKind::MW;
        ex.label = i % 2;
        ex.features = {static_cast<double>(i), 1.0};
        examples[DeviceKind::MW].push_back(ex);
    }
    const SplitResult split = split_dataset(examples, 1, 0.2, 3);
    REQUIRE(split.shards.size() == 1);
    CHECK(split.shards[0].train.size() == 8);
    CHECK(split.test_sets.at(DeviceKind::MW).size() == 2);
}

TEST_CASE("split_dataset is deterministic in the seed") {
    std::map<DeviceKind, std::vector<LabeledExample>> examples;
    Rng rng(mix_seed({0x51}));
    for (int i = 0; i < 40; ++i) {
        LabeledExample ex;
        ex.device = DeviceKind::EP;
        ex.label = static_cast<int>(rng.index(2));
        ex.features = {rng.normal(), rng.normal(), rng.normal()};
        examples[DeviceKind::EP].push_back(ex);
    }
    const SplitResult a = split_dataset(examples, 3, 0.25, 17);
    const SplitResult b = split_dataset(examples, 3, 0.25, 17);
    REQUIRE(a.shards.size() == b.shards.size());
    for (std::size_t i = 0; i < a.shards.size(); ++i) {
        CHECK(a.shards[i].train == b.shards[i].train);
    }
    CHECK(a.test_sets.at(DeviceKind::EP) == b.test_sets.at(DeviceKind::EP));
    const SplitResult c = split_dataset(examples, 3, 0.25, 18);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.shards.size(); ++i) {
        if (!(a.shards[i].train == c.shards[i].train)) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("split_dataset stratifies labels") {
    std::map<DeviceKind, std::vector<LabeledExample>> examples;
    for (int i = 0; i < 100; ++i) {
        LabeledExample ex;
        ex.device = DeviceKind::MU;
        ex.label = i < 50 ? 0 : 1;
        ex.features = {static_cast<double>(i)};
        examples[DeviceKind::MU].push_back(ex);
    }
    const SplitResult split = split_dataset(examples, 2, 0.2, 9);
    for (const ClientShard& shard : split.shards) {
        std::size_t ones = 0;
        for (const LabeledExample& ex : shard.train) ones += ex.label;
        const double ratio = static_cast<double>(ones) / static_cast<double>(shard.train.size());
        CHECK(ratio >= 0.4);
        CHECK(ratio <= 0.6);
    }
}

TEST_CASE("split_dataset partition property") {
    Rng rng(mix_seed({0x77}));
    std::map<DeviceKind, std::vector<LabeledExample>> examples;
    for (DeviceKind device : kAllDevices) {
        for (int i = 0; i < 30 + static_cast<int>(rng.index(30)); ++i) {
            LabeledExample ex;
            ex.device = device;
            ex.label = static_cast<int>(rng.index(2));
            // Unique marker per example so set arithmetic is exact.
            ex.features = {static_cast<double>(device) * 1000.0 + i};
            examples[device].push_back(ex);
        }
    }
    const SplitResult split = split_dataset(examples, 3, 0.2, 4);
    for (DeviceKind device : kAllDevices) {
        std::multiset<double> seen;
        for (const ClientShard& shard : split.shards) {
            if (shard.device != device) continue;
            CHECK(!shard.train.empty());
            for (const LabeledExample& ex : shard.train) seen.insert(ex.features[0]);
        }
        for (const LabeledExample& ex : split.test_sets.at(device)) {
            seen.insert(ex.features[0]);
        }
        std::multiset<double> want;
        for (const LabeledExample& ex : examples.at(device)) want.insert(ex.features[0]);
        CHECK(seen == want); // disjoint + complete (multiset equality)
    }
}

TEST_CASE("split_dataset rejects impossible configurations") {
    std::map<DeviceKind, std::vector<LabeledExample>> examples;
    for (int i = 0; i < 3; ++i) {
        LabeledExample ex;
        ex.device = DeviceKind::MW;
        ex.label = i % 2;
        ex.features = {1.0};
        examples[DeviceKind::MW].push_back(ex);
    }
    CHECK_THROWS_AS(split_dataset(examples, 3, 0.2, 1), config_error);
    CHECK_THROWS_AS(split_dataset(examples, 0, 0.2, 1), config_error);
    CHECK_THROWS_AS(split_dataset(examples, 1, 0.0, 1), config_error);
    CHECK_THROWS_AS(split_dataset(examples, 1, 1.0, 1), config_error);
}

TEST_CASE("dataset cache round-trips bit-exactly") {
    Rng rng(mix_seed({0xCA}));
    std::map<DeviceKind, std::vector<LabeledExample>> examples;
    for (DeviceKind device : {DeviceKind::MW, DeviceKind::MU}) {
        for (int i = 0; i < 12; ++i) {
            LabeledExample ex;
            ex.device = device;
            ex.label = static_cast<int>(rng.index(2));
            ex.features.resize(device == DeviceKind::MW ? 16 : 24);
            for (double& v : ex.features) v = rng.normal();
            examples[device].push_back(std::move(ex));
        }
    }
    const std::string path =
        (std::filesystem::temp_directory_path() / "hhhfl_test_cache.bin").string();
    save_dataset_cache(path, examples);
    const auto loaded = load_dataset_cache(path);
    CHECK(loaded == examples);

    // Corrupt the magic.
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_dataset_cache(path), serialization_error);
    std::filesystem::remove(path);
}

TEST_CASE("parse_stream counts instead of crashing") {
    std::istringstream in(
        "1\t10\tMW\tFP1\t5\t3\t1,2,3\n"
        "garbage line\n"
        "2\t10\tXX\tFP1\t5\t3\t1,2,3\n"
        "\n"
        "3\t11\tMW\tFP1\t5\t2\t4,5\n");
    auto configs = all_default_configs();
    IngestStats stats;
    const std::vector<EegRecord> records = parse_stream(in, configs, stats);
    CHECK(records.size() == 2);
    CHECK(stats.parse_errors == 2); // the garbage line and the XX device line
    CHECK(stats.parsed == 2);
}

TEST_CASE("ingest_files end to end") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "hhhfl_test_ingest";
    fs::create_directories(dir);
    const fs::path file = dir / "mw.txt";
    {
        std::ofstream out(file);
        // Two complete MW events (single channel), one stimulus one not.
        out << "1\t100\tMW\tFP1\t7\t4\t1,2,3,4\n";
        out << "2\t101\tMW\tFP1\t-1\t4\t4,3,2,1\n";
        out << "not a record\n";
    }
    std::map<DeviceKind, DeviceConfig> configs;
    DeviceConfig mw = default_device_config(DeviceKind::MW);
    mw.input_dim = 16; // keep the test small
    configs.emplace(DeviceKind::MW, mw);
    const IngestResult result = ingest_files({file.string()}, configs);
    REQUIRE(result.examples.count(DeviceKind::MW) == 1);
    CHECK(result.examples.at(DeviceKind::MW).size() == 2);
    CHECK(result.stats.parse_errors == 1);
    CHECK(result.examples.at(DeviceKind::MW)[0].features.size() == 16);
    std::set<int> labels;
    for (const auto& ex : result.examples.at(DeviceKind::MW)) labels.insert(ex.label);
    CHECK(labels == std::set<int>{0, 1});
    fs::remove_all(dir);
}
