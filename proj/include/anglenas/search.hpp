#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "anglenas/bench.hpp"
#include "anglenas/rng.hpp"

namespace anglenas {

struct SearchOutcome {
    double best_accuracy = 0.0;
    std::vector<std::int32_t> best_encoding;
    std::size_t evaluations = 0;
};

namespace detail {

inline std::vector<std::size_t> subspace_record_indices(const GroundTruthTable& table,
                                                        const SupernetGraph& subspace) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < table.records.size(); ++i)
        if (encoding_in_space(table.records[i].encoding, subspace)) idx.push_back(i);
    if (idx.empty()) throw EmptySubspace("no table record lies in the subspace");
    return idx;
}

} // namespace detail

// Budgeted random search without replacement over the subspace's children;
// a budget at least the subspace size degenerates to exhaustive search.
inline SearchOutcome random_search(const GroundTruthTable& table, const SupernetGraph& subspace,
                                   std::size_t budget, Rng& rng) {
    std::vector<std::size_t> idx = detail::subspace_record_indices(table, subspace);
    rng.shuffle(idx);
    const std::size_t n = std::min(budget, idx.size());
    SearchOutcome out;
    out.evaluations = n;
    for (std::size_t i = 0; i < n; ++i) {
        const ChildRecord& rec = table.records[idx[i]];
        if (i == 0 || rec.accuracy > out.best_accuracy) {
            out.best_accuracy = rec.accuracy;
            out.best_encoding = rec.encoding;
        }
    }
    return out;
}

// Small regularized-evolution loop: tournament parent selection, one-edge
// mutation, oldest member retired. Fitness lookups come from the table.
inline SearchOutcome evolutionary_search(const GroundTruthTable& table,
                                         const SupernetGraph& subspace, std::size_t budget,
                                         Rng& rng, std::size_t population_size = 16,
                                         std::size_t tournament = 4) {
    struct Member {
        ChildModel child;
        double accuracy;
    };
    SearchOutcome out;
    auto fitness = [&](const ChildModel& c) -> double {
        const ChildRecord* rec = table.find(c.encoding());
        if (!rec) throw Error("evolutionary_search: child missing from table");
        return rec->accuracy;
    };
    auto track = [&](const Member& m) {
        if (out.evaluations == 1 || m.accuracy > out.best_accuracy) {
            out.best_accuracy = m.accuracy;
            out.best_encoding = m.child.encoding();
        }
    };
    std::vector<Member> population;
    for (std::size_t i = 0; i < population_size && out.evaluations < budget; ++i) {
        Member m{sample_child(subspace, rng), 0.0};
        m.accuracy = fitness(m.child);
        ++out.evaluations;
        track(m);
        population.push_back(std::move(m));
    }
    while (out.evaluations < budget) {
        std::size_t best_idx = rng.uniform_index(population.size());
        for (std::size_t t = 1; t < tournament; ++t) {
            const std::size_t c = rng.uniform_index(population.size());
            if (population[c].accuracy > population[best_idx].accuracy) best_idx = c;
        }
        // mutate one edge of the parent to a random live slot
        ChildModel child = population[best_idx].child;
        for (std::size_t attempt = 0; attempt < kSampleRetryBudget; ++attempt) {
            ChildModel mutant = child;
            const std::size_t e = rng.uniform_index(subspace.edge_count());
            mutant.choice[e] = std::uint32_t(rng.uniform_index(subspace.edge(e).ops.size()));
            if (mutant.is_valid()) {
                child = std::move(mutant);
                break;
            }
        }
        Member m{std::move(child), 0.0};
        m.accuracy = fitness(m.child);
        ++out.evaluations;
        track(m);
        population.erase(population.begin());
        population.push_back(std::move(m));
    }
    return out;
}

// Original-vs-shrunk comparison: run each budgeted searcher over each space
// for a number of trials and summarize the best-found accuracies.
struct SpaceSearchSummary {
    std::string space_name;
    std::uint64_t space_size = 0;
    std::size_t children_in_table = 0;
    double exhaustive_best = 0.0;
    double random_mean = 0.0, random_std = 0.0;
    double evolution_mean = 0.0, evolution_std = 0.0;
};

inline SpaceSearchSummary summarize_space_search(const std::string& name,
                                                 const GroundTruthTable& table,
                                                 const SupernetGraph& subspace,
                                                 std::size_t budget, std::size_t trials,
                                                 std::uint64_t seed) {
    SpaceSearchSummary s;
    s.space_name = name;
    s.space_size = space_size(subspace);
    s.children_in_table = detail::subspace_record_indices(table, subspace).size();
    s.exhaustive_best = best_in_space(table, subspace).accuracy;
    auto run = [&](bool evolution, double& mean, double& stddev) {
        std::vector<double> bests;
        for (std::size_t t = 0; t < trials; ++t) {
            Rng rng(Rng::mix(seed, (evolution ? 0x45766fULL : 0x526e64ULL) + t));
            const SearchOutcome o = evolution
                                        ? evolutionary_search(table, subspace, budget, rng)
                                        : random_search(table, subspace, budget, rng);
            bests.push_back(o.best_accuracy);
        }
        mean = 0.0;
        for (double b : bests) mean += b;
        mean /= double(bests.size());
        double sq = 0.0;
        for (double b : bests) sq += (b - mean) * (b - mean);
        stddev = bests.size() >= 2 ? std::sqrt(sq / double(bests.size() - 1)) : 0.0;
    };
    run(false, s.random_mean, s.random_std);
    run(true, s.evolution_mean, s.evolution_std);
    return s;
}

} // namespace anglenas
