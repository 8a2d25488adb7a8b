#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "flockrl/errors.hpp"
#include "flockrl/experience.hpp"

using namespace flockrl;

namespace {

Transition make_transition(int n, int obs_len, double tag) {
    Transition t;
    for (int i = 0; i < n; ++i) {
        t.obs.emplace_back(static_cast<std::size_t>(obs_len), tag + i * 0.01);
        t.next_obs.emplace_back(static_cast<std::size_t>(obs_len), tag + 0.5 + i * 0.01);
        t.act.push_back({0.1 * tag, -0.1 * tag});
        t.rew.push_back(tag * 2.0);
    }
    t.done = false;
    return t;
}

Transition random_transition(int n, int obs_len, Rng& rng) {
    Transition t;
    for (int i = 0; i < n; ++i) {
        std::vector<double> o(static_cast<std::size_t>(obs_len)), o2(static_cast<std::size_t>(obs_len));
        for (double& x : o) x = rng.uniform(-10, 10);
        for (double& x : o2) x = rng.uniform(-10, 10);
        t.obs.push_back(std::move(o));
        t.next_obs.push_back(std::move(o2));
        t.act.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
        t.rew.push_back(rng.uniform(-5, 5));
    }
    t.done = rng.uniform01() < 0.1;
    return t;
}

bool same_transition(const Transition& a, const Transition& b) {
    if (a.done != b.done || a.obs.size() != b.obs.size()) return false;
    for (std::size_t i = 0; i < a.obs.size(); ++i) {
        if (std::memcmp(a.obs[i].data(), b.obs[i].data(), a.obs[i].size() * 8) != 0) return false;
        if (std::memcmp(a.next_obs[i].data(), b.next_obs[i].data(), a.next_obs[i].size() * 8) != 0)
            return false;
        if (a.act[i].fx != b.act[i].fx || a.act[i].fy != b.act[i].fy) return false;
        if (a.rew[i] != b.rew[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("ring buffer semantics") {
    ReplayBuffer buf(3);
    CHECK(buf.empty());
    buf.push(make_transition(2, 4, 1.0));
    CHECK(buf.size() == 1);
    buf.push(make_transition(2, 4, 2.0));
    buf.push(make_transition(2, 4, 3.0));
    buf.push(make_transition(2, 4, 4.0));  // evicts the oldest
    CHECK(buf.size() == 3);
    CHECK(buf.at(0).rew[0] == doctest::Approx(4.0));   // t2
    CHECK(buf.at(1).rew[0] == doctest::Approx(6.0));   // t3
    CHECK(buf.at(2).rew[0] == doctest::Approx(8.0));   // t4
    CHECK_THROWS_AS(buf.at(3), ContractViolation);

    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(buf.push(make_transition(3, 4, 5.0)), ContractViolation);
        CHECK_THROWS_AS(buf.push(make_transition(2, 5, 5.0)), ContractViolation);
    }

    SUBCASE("FIFO order after many pushes") {
        for (int k = 5; k <= 20; ++k) buf.push(make_transition(2, 4, static_cast<double>(k)));
        CHECK(buf.size() == 3);
        CHECK(buf.at(0).rew[0] == doctest::Approx(36.0));
        CHECK(buf.at(2).rew[0] == doctest::Approx(40.0));
    }
}

TEST_CASE("write lock turns the buffer into an immutable demonstration set") {
    ReplayBuffer buf(8);
    buf.push(make_transition(2, 4, 1.0));
    buf.write_lock();
    CHECK_THROWS_AS(buf.push(make_transition(2, 4, 2.0)), ContractViolation);
    CHECK(buf.size() == 1);
}

TEST_CASE("sampling with replacement") {
    ReplayBuffer buf(16);
    buf.push(make_transition(2, 4, 1.0));

    SUBCASE("single-element buffer returns copies of it") {
        Rng rng(1);
        const auto batch = buf.sample_minibatch(32, rng);
        CHECK(batch.size() == 32);
        for (const Transition* t : batch) CHECK(t == &buf.at(0));
    }

    SUBCASE("deterministic given the rng state") {
        for (int k = 2; k <= 10; ++k) buf.push(make_transition(2, 4, static_cast<double>(k)));
        Rng r1(7), r2(7);
        const auto b1 = buf.sample_minibatch(64, r1);
        const auto b2 = buf.sample_minibatch(64, r2);
        for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1[i] == b2[i]);
        CHECK(buf.sample_calls() == 2);
    }

    SUBCASE("empty buffer errors") {
        ReplayBuffer empty(4);
        Rng rng(0);
        CHECK_THROWS_AS(empty.sample_minibatch(8, rng), EmptyBufferError);
    }

    SUBCASE("sampling never mutates the contents") {
        for (int k = 2; k <= 10; ++k) buf.push(make_transition(2, 4, static_cast<double>(k)));
        std::vector<Transition> before;
        for (std::size_t i = 0; i < buf.size(); ++i) before.push_back(buf.at(i));
        Rng rng(3);
        buf.sample_minibatch(256, rng);
        for (std::size_t i = 0; i < buf.size(); ++i) CHECK(same_transition(before[i], buf.at(i)));
    }

    SUBCASE("100000 draws over 10 elements stay within 3 sigma of uniform") {
        for (int k = 2; k <= 10; ++k) buf.push(make_transition(2, 4, static_cast<double>(k)));
        REQUIRE(buf.size() == 10);
        Rng rng(42);
        std::vector<int> counts(10, 0);
        const auto batch = buf.sample_minibatch(100000, rng);
        for (const Transition* t : batch)
            for (std::size_t i = 0; i < buf.size(); ++i)
                if (t == &buf.at(i)) {
                    ++counts[i];
                    break;
                }
        const double expected = 10000.0;
        const double sigma = std::sqrt(100000.0 * 0.1 * 0.9);
        for (int c : counts) CHECK(std::abs(c - expected) <= 3.0 * sigma);
    }
}

TEST_CASE("demonstration file round trip and corruption handling") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "flockrl_exp_test";
    fs::create_directories(dir);
    const std::string path = (dir / "demos.jsonl").string();

    ReplayBuffer buf(1024);
    Rng rng(17);
    for (int k = 0; k < 1000; ++k) buf.push(random_transition(3, 15, rng));
    const nlohmann::json meta{{"generator", "test"}, {"success_rate", 0.5}};
    save_demos(buf, path, meta);

    SUBCASE("round trip reproduces every transition exactly and locks the buffer") {
        nlohmann::json loaded_meta;
        ReplayBuffer loaded = load_demos(path, &loaded_meta);
        REQUIRE(loaded.size() == buf.size());
        for (std::size_t i = 0; i < buf.size(); ++i) CHECK(same_transition(buf.at(i), loaded.at(i)));
        CHECK(loaded.write_locked());
        CHECK(loaded_meta.at("success_rate").get<double>() == 0.5);
        CHECK_THROWS_AS(loaded.push(make_transition(3, 15, 0.0)), ContractViolation);
    }

    SUBCASE("agent-count mismatch against the header") {
        std::ifstream in(path);
        std::string header, line;
        std::getline(in, header);
        std::getline(in, line);
        in.close();
        auto h = nlohmann::json::parse(header);
        h["n"] = 4;  // header now disagrees with every record
        const std::string bad = (dir / "bad_n.jsonl").string();
        std::ofstream out(bad);
        out << h.dump() << '\n' << line << '\n';
        out.close();
        // also fix count so the n mismatch is what fires
        try {
            load_demos(bad);
            FAIL("expected CorruptFileError");
        } catch (const CorruptFileError& e) {
            CHECK(e.line_number == 2);
        }
    }

    SUBCASE("truncated final line reports its line number") {
        std::ifstream in(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const std::string trunc = (dir / "trunc.jsonl").string();
        std::ofstream out(trunc, std::ios::binary);
        out.write(all.data(), static_cast<long>(all.size() - 40));
        out.close();
        try {
            load_demos(trunc);
            FAIL("expected CorruptFileError");
        } catch (const CorruptFileError& e) {
            CHECK(e.line_number == 1001);  // header + 1000 records; the last is cut
        }
    }

    SUBCASE("count mismatch is detected") {
        std::ifstream in(path);
        std::string header, line;
        std::getline(in, header);
        std::getline(in, line);
        in.close();
        auto h = nlohmann::json::parse(header);
        h["count"] = 2;
        const std::string bad = (dir / "bad_count.jsonl").string();
        std::ofstream out(bad);
        out << h.dump() << '\n' << line << '\n';
        out.close();
        CHECK_THROWS_AS(load_demos(bad), CorruptFileError);
    }

    SUBCASE("not a demo file") {
        const std::string bad = (dir / "not_demos.jsonl").string();
        std::ofstream out(bad);
        out << "{\"format\":\"something-else\"}\n";
        out.close();
        CHECK_THROWS_AS(load_demos(bad), CorruptFileError);
    }
}

TEST_CASE("ring restore preserves physical layout for resumption") {
    ReplayBuffer buf(4);
    for (int k = 1; k <= 6; ++k) buf.push(make_transition(2, 3, static_cast<double>(k)));
    // physical storage now wrapped; capture it
    std::vector<Transition> physical;
    for (std::size_t i = 0; i < buf.size(); ++i) physical.push_back(buf.raw_at(i));
    const std::size_t cursor = buf.ring_cursor();

    ReplayBuffer restored(4);
    restored.restore_ring(physical, cursor);
    CHECK(restored.size() == buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        CHECK(same_transition(restored.raw_at(i), buf.raw_at(i)));
    CHECK(restored.ring_cursor() == cursor);

    // identical sampling stream after restore
    Rng r1(5), r2(5);
    const auto b1 = buf.sample_minibatch(16, r1);
    const auto b2 = restored.sample_minibatch(16, r2);
    for (std::size_t i = 0; i < b1.size(); ++i)
        CHECK(same_transition(*b1[i], *b2[i]));

    // logical order continues correctly after restore
    restored.push(make_transition(2, 3, 7.0));
    CHECK(restored.at(3).rew[0] == doctest::Approx(14.0));
    CHECK(restored.at(0).rew[0] == doctest::Approx(8.0));
}
