#pragma once

// Runtime selection service: gating, ranker dispatch with heuristic fallback,
// pool logging and the annotation work queue. Transport-independent; see
// http.hpp for the JSON API.

#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rsel/core.hpp"
#include "rsel/hash.hpp"
#include "rsel/heuristic.hpp"
#include "rsel/random.hpp"
#include "rsel/ranking.hpp"
#include "rsel/serialize.hpp"

namespace rsel {

struct GatingRules {
    std::uint32_t min_system_turn = 4;
    bool skip_singleton = true;
    std::vector<std::string> functional_act_bypass{"REQUEST_REPEAT", "ADULT_CONTENT_DEFLECT"};

    void validate() const {
        if (min_system_turn < 1) throw Error(ErrorKind::InvalidRecord, "min_system_turn must be >= 1");
    }
};

enum class Gate { Ranked, BypassTurn, BypassSingleton, BypassFunctional };

inline std::string to_string(Gate g) {
    switch (g) {
        case Gate::Ranked: return "RANKED";
        case Gate::BypassTurn: return "BYPASS_TURN";
        case Gate::BypassSingleton: return "BYPASS_SINGLETON";
        case Gate::BypassFunctional: return "BYPASS_FUNCTIONAL";
    }
    return "";
}

// Fixed order: turn, singleton, functional act.
inline Gate evaluate_gates(const ResponsePool& pool, const GatingRules& rules) {
    if (pool.state.system_turn_count < rules.min_system_turn) return Gate::BypassTurn;
    if (rules.skip_singleton && pool.candidates.size() == 1) return Gate::BypassSingleton;
    for (const auto& act : pool.state.dialogue_acts)
        for (const auto& tag : rules.functional_act_bypass)
            if (act == tag) return Gate::BypassFunctional;
    return Gate::Ranked;
}

struct RankRequest {
    ResponsePool pool;
    std::string ranker;
    std::string request_id;
};

struct RankResponse {
    std::string request_id;
    ResponseCandidate selected;
    RankedPool ranking;
    Gate gate = Gate::Ranked;
    std::string ranker_used;
    bool fallback = false;  // requested ranker failed; heuristic order served
    std::string fallback_reason;
};

// --- pool storage ---------------------------------------------------------------

class PoolStore {
public:
    virtual ~PoolStore() = default;
    // Returns false when the pool_id was already stored.
    virtual bool append(const ResponsePool& pool) = 0;
    virtual std::size_t size() const = 0;
    virtual std::optional<ResponsePool> get(const std::string& pool_id) const = 0;
    virtual std::vector<ResponsePool> all() const = 0;  // insertion order
};

class MemoryPoolStore : public PoolStore {
public:
    bool append(const ResponsePool& pool) override {
        std::lock_guard lock(mu_);
        return insert_locked(pool);
    }
    std::size_t size() const override {
        std::lock_guard lock(mu_);
        return pools_.size();
    }
    std::optional<ResponsePool> get(const std::string& pool_id) const override {
        std::lock_guard lock(mu_);
        auto it = index_.find(pool_id);
        if (it == index_.end()) return std::nullopt;
        return pools_[it->second];
    }
    std::vector<ResponsePool> all() const override {
        std::lock_guard lock(mu_);
        return pools_;
    }

protected:
    bool insert_locked(const ResponsePool& pool) {
        if (index_.count(pool.pool_id)) return false;
        index_.emplace(pool.pool_id, pools_.size());
        pools_.push_back(pool);
        return true;
    }

    mutable std::mutex mu_;
    std::vector<ResponsePool> pools_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Append-only JSONL file. Existing records are loaded on open, so a restart
// keeps idempotency; compact() rewrites the file without duplicates.
class JsonlPoolStore final : public MemoryPoolStore {
public:
    explicit JsonlPoolStore(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        for (std::string line; std::getline(in, line);) {
            if (trim(line).empty()) continue;
            insert_locked(parse_record<ResponsePool>(line));
        }
        out_.open(path_, std::ios::app);
        if (!out_) throw Error(ErrorKind::StorageError, "cannot open pool store " + path_);
    }

    bool append(const ResponsePool& pool) override {
        std::lock_guard lock(mu_);
        if (!insert_locked(pool)) return false;
        out_ << json(pool).dump() << '\n';
        out_.flush();
        if (!out_) throw Error(ErrorKind::StorageError, "write to " + path_ + " failed");
        return true;
    }

    void compact() {
        std::lock_guard lock(mu_);
        out_.close();
        const std::string tmp = path_ + ".tmp";
        {
            std::ofstream o(tmp, std::ios::trunc);
            for (const auto& p : pools_) o << json(p).dump() << '\n';
            if (!o) throw Error(ErrorKind::StorageError, "compaction write failed");
        }
        if (std::rename(tmp.c_str(), path_.c_str()) != 0) throw Error(ErrorKind::StorageError, "compaction rename failed");
        out_.open(path_, std::ios::app);
    }

private:
    std::string path_;
    std::ofstream out_;
};

// --- annotation queue -------------------------------------------------------------

enum class AssignmentState { Unassigned, Assigned, Done };

inline std::string to_string(AssignmentState s) {
    switch (s) {
        case AssignmentState::Unassigned: return "UNASSIGNED";
        case AssignmentState::Assigned: return "ASSIGNED";
        case AssignmentState::Done: return "DONE";
    }
    return "";
}

struct AnnotationQueueItem {
    std::string pool_id;
    AssignmentState state = AssignmentState::Unassigned;
    std::optional<std::string> assigned_to;
    Timestamp lease_expiry{};
};

struct AnnotationOptions {
    std::chrono::seconds lease{30 * 60};
    bool shuffle_candidates = true;
    bool show_rg = false;
    std::uint64_t shuffle_seed = 0;
    std::size_t context_turns = 4;
};

struct AnnotationPayload {
    std::string pool_id;
    std::vector<Turn> context;                  // last turns, most recent last
    std::vector<ResponseCandidate> candidates;  // display order
    bool show_rg = false;
    std::uint64_t shuffle_seed = 0;
    Timestamp lease_expiry{};
};

inline nlohmann::json to_json(const AnnotationPayload& p) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : p.candidates) {
        nlohmann::json jc = c;
        if (!p.show_rg) jc.erase("rg");
        cands.push_back(std::move(jc));
    }
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& t : p.context) {
        nlohmann::json jt = t;
        if (!p.show_rg) jt.erase("rg_id");
        ctx.push_back(std::move(jt));
    }
    return {{"pool_id", p.pool_id},
            {"context", ctx},
            {"candidates", cands},
            {"none_of_the_above_option", true},
            {"show_rg", p.show_rg},
            {"shuffle_seed", p.shuffle_seed},
            {"lease_expiry", format_timestamp(p.lease_expiry)},
            {"grade_legend",
             {{"A", "an excellent response"},
              {"B", "a response that could be used"},
              {"C", "a response that might be okay in another context"},
              {"D", "a bad response"}}}};
}

struct StoredAnnotation {
    AnnotationRecord record;
    std::uint64_t shuffle_seed = 0;
    std::vector<std::string> display_order;
};

// --- the service --------------------------------------------------------------------

class SelectionService {
public:
    using Clock = std::function<Timestamp()>;

    static Timestamp system_now() {
        return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
    }

    SelectionService(GatingRules rules, std::shared_ptr<PoolStore> store, AnnotationOptions ann = {},
                     Clock clock = &SelectionService::system_now, std::string annotation_log_path = "")
        : rules_(std::move(rules)), store_(std::move(store)), ann_opt_(ann), clock_(std::move(clock)),
          annotation_log_(std::move(annotation_log_path)) {
        rules_.validate();
        for (const auto& p : store_->all()) enqueue_locked(p.pool_id);
    }

    void register_ranker(std::shared_ptr<const Ranker> ranker) {
        std::lock_guard lock(registry_mu_);
        const auto name = ranker->name();
        rankers_[name] = std::move(ranker);
    }

    bool has_ranker(const std::string& name) const {
        std::lock_guard lock(registry_mu_);
        return rankers_.count(name) != 0;
    }

    const GatingRules& rules() const { return rules_; }

    RankResponse handle_rank(const RankRequest& req) {
        validate(req.pool);
        std::shared_ptr<const Ranker> ranker;
        {
            std::lock_guard lock(registry_mu_);
            auto it = rankers_.find(req.ranker);
            if (it == rankers_.end()) throw Error(ErrorKind::UnknownRanker, req.ranker);
            ranker = it->second;
        }
        log_pool(req.pool);

        RankResponse resp;
        resp.request_id = req.request_id;
        resp.gate = evaluate_gates(req.pool, rules_);
        if (resp.gate != Gate::Ranked) {
            resp.ranking.pool_id = req.pool.pool_id;
            for (const auto& c : req.pool.candidates) resp.ranking.order.push_back(c.candidate_id);
            resp.selected = req.pool.candidates.front();
            resp.ranker_used = "dm-order";
            return resp;
        }

        try {
            resp.ranking = ranker->rank(req.pool);
            if (!is_permutation_of(resp.ranking, req.pool))
                throw Error(ErrorKind::RankerFailure, "ranker output is not a permutation of the pool");
            resp.ranker_used = ranker->name();
        } catch (const std::exception& e) {
            resp.fallback = true;
            resp.fallback_reason = e.what();
            try {
                resp.ranking = heuristic_.rank(req.pool);
            } catch (const std::exception& e2) {
                throw Error(ErrorKind::RankerFailure, std::string(e.what()) + "; heuristic fallback: " + e2.what());
            }
            resp.ranker_used = heuristic_.name();
        }
        resp.selected = *req.pool.find(resp.ranking.top());
        return resp;
    }

    std::string log_pool(const ResponsePool& pool) {
        validate(pool);
        if (store_->append(pool)) {
            std::lock_guard lock(queue_mu_);
            enqueue_locked(pool.pool_id);
        }
        return pool.pool_id;
    }

    std::size_t logged_pools() const { return store_->size(); }

    std::optional<AnnotationPayload> annotation_next(const std::string& annotator_id) {
        const Timestamp now = clock_();
        std::lock_guard lock(queue_mu_);
        AnnotationQueueItem* pick = nullptr;
        for (const auto& id : queue_order_) {
            auto& item = queue_.at(id);
            expire_locked(item, now);
            // An annotator re-asking gets their live lease back first.
            if (item.state == AssignmentState::Assigned && item.assigned_to == annotator_id) {
                pick = &item;
                break;
            }
            if (!pick && item.state == AssignmentState::Unassigned) pick = &item;
        }
        if (!pick) return std::nullopt;
        const auto pool = store_->get(pick->pool_id);
        if (!pool) return std::nullopt;
        // Compare-and-set under the queue lock.
        pick->state = AssignmentState::Assigned;
        pick->assigned_to = annotator_id;
        pick->lease_expiry = now + ann_opt_.lease;
        return render(*pool, pick->lease_expiry);
    }

    StoredAnnotation annotation_submit(const AnnotationRecord& record) {
        const Timestamp now = clock_();
        const auto pool = store_->get(record.pool_id);
        if (!pool) throw Error(ErrorKind::NotFound, "unknown pool " + record.pool_id);
        try {
            validate(record);
            check_annotation_against(*pool, record);
        } catch (const Error& e) {
            throw Error(ErrorKind::InvalidGrades, e.what());
        }
        if (record.grades.empty() && !record.none_of_the_above)
            throw Error(ErrorKind::InvalidGrades, "no grades and none_of_the_above not set");

        std::lock_guard lock(queue_mu_);
        auto it = queue_.find(record.pool_id);
        if (it == queue_.end()) throw Error(ErrorKind::NotFound, "pool not queued " + record.pool_id);
        auto& item = it->second;
        expire_locked(item, now);
        if (item.state != AssignmentState::Assigned || item.assigned_to != record.annotator_id)
            throw Error(ErrorKind::LeaseExpired, "no live lease on " + record.pool_id + " for " + record.annotator_id);
        item.state = AssignmentState::Done;
        item.assigned_to.reset();

        StoredAnnotation stored{record, seed_for(record.pool_id), {}};
        for (const auto& c : display_order(*pool)) stored.display_order.push_back(c.candidate_id);
        annotations_.push_back(stored);
        persist_locked(stored);
        return stored;
    }

    std::vector<StoredAnnotation> annotations() const {
        std::lock_guard lock(queue_mu_);
        return annotations_;
    }

    std::optional<AnnotationQueueItem> queue_item(const std::string& pool_id) const {
        std::lock_guard lock(queue_mu_);
        auto it = queue_.find(pool_id);
        if (it == queue_.end()) return std::nullopt;
        return it->second;
    }

private:
    void enqueue_locked(const std::string& pool_id) {
        if (queue_.emplace(pool_id, AnnotationQueueItem{pool_id, AssignmentState::Unassigned, std::nullopt, {}}).second) queue_order_.push_back(pool_id);
    }

    void expire_locked(AnnotationQueueItem& item, Timestamp now) const {
        if (item.state == AssignmentState::Assigned && now >= item.lease_expiry) {
            item.state = AssignmentState::Unassigned;
            item.assigned_to.reset();
        }
    }

    std::uint64_t seed_for(const std::string& pool_id) const {
        return Fnv1a().field(pool_id).value() ^ ann_opt_.shuffle_seed;
    }

    std::vector<ResponseCandidate> display_order(const ResponsePool& pool) const {
        std::vector<ResponseCandidate> c = pool.candidates;
        if (ann_opt_.shuffle_candidates) {
            Rng rng(seed_for(pool.pool_id));
            rng.shuffle(c);
        }
        return c;
    }

    AnnotationPayload render(const ResponsePool& pool, Timestamp expiry) const {
        AnnotationPayload p;
        p.pool_id = pool.pool_id;
        const std::size_t n = pool.context.size();
        const std::size_t first = n > ann_opt_.context_turns ? n - ann_opt_.context_turns : 0;
        p.context.assign(pool.context.begin() + static_cast<long>(first), pool.context.end());
        p.candidates = display_order(pool);
        p.show_rg = ann_opt_.show_rg;
        p.shuffle_seed = ann_opt_.shuffle_candidates ? seed_for(pool.pool_id) : 0;
        p.lease_expiry = expiry;
        return p;
    }

    void persist_locked(const StoredAnnotation& s) {
        if (annotation_log_.empty()) return;
        std::ofstream out(annotation_log_, std::ios::app);
        nlohmann::json j = s.record;
        j["shuffle_seed"] = s.shuffle_seed;
        j["display_order"] = s.display_order;
        out << j.dump() << '\n';
        if (!out) throw Error(ErrorKind::StorageError, "cannot append to " + annotation_log_);
    }

    GatingRules rules_;
    std::shared_ptr<PoolStore> store_;
    AnnotationOptions ann_opt_;
    Clock clock_;
    std::string annotation_log_;
    HeuristicRanker heuristic_;

    mutable std::mutex registry_mu_;
    std::map<std::string, std::shared_ptr<const Ranker>> rankers_;

    mutable std::mutex queue_mu_;
    std::unordered_map<std::string, AnnotationQueueItem> queue_;
    std::vector<std::string> queue_order_;
    std::vector<StoredAnnotation> annotations_;
};

}  // namespace rsel
