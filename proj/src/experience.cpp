#include "flockrl/experience.hpp"

#include <cstdio>
#include <filesystem>

#include "flockrl/errors.hpp"

namespace flockrl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("replay buffer capacity must be >= 1");
    storage_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::validate_shape(const Transition& t) const {
    const int n = static_cast<int>(t.obs.size());
    if (n == 0 || t.act.size() != t.obs.size() || t.rew.size() != t.obs.size() ||
        t.next_obs.size() != t.obs.size())
        throw ContractViolation("transition: obs/act/rew/next_obs lengths disagree");
    const int olen = static_cast<int>(t.obs.front().size());
    for (const auto& o : t.obs)
        if (static_cast<int>(o.size()) != olen)
            throw ContractViolation("transition: inconsistent observation lengths");
    for (const auto& o : t.next_obs)
        if (static_cast<int>(o.size()) != olen)
            throw ContractViolation("transition: inconsistent next-observation lengths");
    if (n_ >= 0 && (n != n_ || olen != obs_len_))
        throw ContractViolation("transition shape does not match buffer contents");
}

void ReplayBuffer::push(Transition t) {
    if (locked_) throw ContractViolation("push into a write-locked demonstration buffer");
    validate_shape(t);
    if (n_ < 0) {
        n_ = static_cast<int>(t.obs.size());
        obs_len_ = static_cast<int>(t.obs.front().size());
    }
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= storage_.size()) throw ContractViolation("replay buffer index out of range");
    if (storage_.size() < capacity_) return storage_[i];
    return storage_[(next_ + i) % capacity_];
}

void ReplayBuffer::restore_ring(std::vector<Transition> storage, std::size_t cursor) {
    if (storage.size() > capacity_) throw ContractViolation("restore_ring: size exceeds capacity");
    if (cursor >= std::max<std::size_t>(storage.size(), 1)) cursor = 0;
    if (!storage.empty()) {
        n_ = static_cast<int>(storage.front().obs.size());
        obs_len_ = static_cast<int>(storage.front().obs.front().size());
        for (const Transition& t : storage) validate_shape(t);
    }
    storage_ = std::move(storage);
    next_ = cursor;
}

std::vector<const Transition*> ReplayBuffer::sample_minibatch(std::size_t M, Rng& rng) const {
    if (storage_.empty()) throw EmptyBufferError("sample_minibatch: buffer is empty");
    ++sample_calls_;
    std::vector<const Transition*> batch;
    batch.reserve(M);
    for (std::size_t k = 0; k < M; ++k)
        batch.push_back(&storage_[rng.uniform_index(storage_.size())]);
    return batch;
}

nlohmann::json transition_to_json(const Transition& t) {
    nlohmann::json j;
    j["obs"] = t.obs;
    nlohmann::json act = nlohmann::json::array();
    for (const ActionCommand& a : t.act) act.push_back({a.fx, a.fy});
    j["act"] = act;
    j["rew"] = t.rew;
    j["next_obs"] = t.next_obs;
    j["done"] = t.done;
    return j;
}

Transition transition_from_json(const nlohmann::json& j, long line) {
    Transition t;
    try {
        t.obs = j.at("obs").get<std::vector<std::vector<double>>>();
        for (const auto& a : j.at("act")) {
            if (!a.is_array() || a.size() != 2)
                throw CorruptFileError("action must be a [fx, fy] pair", line);
            t.act.push_back({a[0].get<double>(), a[1].get<double>()});
        }
        t.rew = j.at("rew").get<std::vector<double>>();
        t.next_obs = j.at("next_obs").get<std::vector<std::vector<double>>>();
        t.done = j.at("done").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(std::string("bad transition record: ") + e.what(), line);
    }
    return t;
}

namespace {

nlohmann::json make_header(int n, int obs_len, std::size_t count, const nlohmann::json& meta) {
    return nlohmann::json{{"format", "flockrl-demos"},
                          {"version", 1},
                          {"n", n},
                          {"obs_len", obs_len},
                          {"count", count},
                          {"meta", meta}};
}

}  // namespace

void save_demos(const ReplayBuffer& buf, const std::string& path, const nlohmann::json& meta) {
    if (buf.empty()) throw ContractViolation("save_demos: empty buffer");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorruptFileError("cannot open for write: " + path);
    out << make_header(buf.num_agents(), buf.obs_len(), buf.size(), meta).dump() << '\n';
    for (std::size_t i = 0; i < buf.size(); ++i) out << transition_to_json(buf.at(i)).dump() << '\n';
    if (!out) throw CorruptFileError("write failed: " + path);
}

DemoFileWriter::DemoFileWriter(const std::string& path)
    : path_(path), tmp_path_(path + ".records.tmp") {
    tmp_ = std::make_unique<std::ofstream>(tmp_path_, std::ios::binary);
    if (!*tmp_) throw CorruptFileError("cannot open for write: " + tmp_path_);
}

DemoFileWriter::~DemoFileWriter() {
    if (!finished_) {
        tmp_.reset();
        std::error_code ec;
        std::filesystem::remove(tmp_path_, ec);
    }
}

void DemoFileWriter::add(const Transition& t) {
    if (finished_) throw ContractViolation("DemoFileWriter: add after finish");
    if (n_ < 0) {
        n_ = static_cast<int>(t.obs.size());
        obs_len_ = static_cast<int>(t.obs.front().size());
    }
    *tmp_ << transition_to_json(t).dump() << '\n';
    ++count_;
}

void DemoFileWriter::finish(const nlohmann::json& meta) {
    if (finished_) return;
    if (count_ == 0) throw ContractViolation("DemoFileWriter: no transitions recorded");
    tmp_->flush();
    if (!*tmp_) throw CorruptFileError("write failed: " + tmp_path_);
    tmp_.reset();

    std::ofstream out(path_, std::ios::binary);
    if (!out) throw CorruptFileError("cannot open for write: " + path_);
    out << make_header(n_, obs_len_, count_, meta).dump() << '\n';
    std::ifstream in(tmp_path_, std::ios::binary);
    out << in.rdbuf();
    if (!out) throw CorruptFileError("write failed: " + path_);
    out.close();
    in.close();
    std::filesystem::remove(tmp_path_);
    finished_ = true;
}

ReplayBuffer load_demos(const std::string& path, nlohmann::json* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFileError("cannot open: " + path);

    std::string line;
    if (!std::getline(in, line)) throw CorruptFileError("empty demonstration file: " + path, 1);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(std::string("bad header: ") + e.what(), 1);
    }
    if (header.value("format", "") != "flockrl-demos")
        throw CorruptFileError("not a flockrl demonstration file", 1);
    if (header.value("version", 0) != 1)
        throw CorruptFileError("unsupported demonstration format version", 1);

    int n, obs_len;
    std::size_t count;
    try {
        n = header.at("n").get<int>();
        obs_len = header.at("obs_len").get<int>();
        count = header.at("count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(std::string("bad header fields: ") + e.what(), 1);
    }
    if (n < 1 || obs_len < 1 || count < 1) throw CorruptFileError("implausible header", 1);
    if (meta_out) *meta_out = header.value("meta", nlohmann::json::object());

    ReplayBuffer buf(count);
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) throw CorruptFileError("blank record line", line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFileError(std::string("unparseable record: ") + e.what(), line_no);
        }
        Transition t = transition_from_json(j, line_no);
        if (static_cast<int>(t.obs.size()) != n)
            throw CorruptFileError("record agent count does not match header", line_no);
        if (static_cast<int>(t.obs.front().size()) != obs_len)
            throw CorruptFileError("record observation length does not match header", line_no);
        try {
            buf.push(std::move(t));
        } catch (const ContractViolation& e) {
            throw CorruptFileError(e.what(), line_no);
        }
    }
    if (buf.size() != count)
        throw CorruptFileError("header count " + std::to_string(count) + " but file holds " +
                                   std::to_string(buf.size()) + " records",
                               line_no);
    buf.write_lock();
    return buf;
}

}  // namespace flockrl
