// Minimal library walkthrough: build a toy cell space, train the supernet
// with uniform child sampling, inspect angle-based operator scores, then run
// the shrinking loop and print what survived.

#include <iostream>

#include "anglenas/anglenas.hpp"

using namespace anglenas;

int main() {
    const SupernetGraph space = make_complete_cell(
        4, 8, {{OpKind::parametric}, {OpKind::identity}, {OpKind::pooling, 2}});
    std::cout << "space: " << space.edge_count() << " edges, |G| = " << space_size(space)
              << "\n";

    const DataBundle data = make_rings({512, 512, 4, 0.12, 7});

    TrainConfig train;
    train.first_stage_epochs = 20;
    train.batch_size = 64;
    train.lr = 0.08;
    WeightStore store = init_supernet(space, InitPolicy::kaiming_normal, 1);
    for (std::size_t e = 0; e < train.first_stage_epochs; ++e) {
        const EpochLog log = train_epoch(store, space, data.train, train, e,
                                         train.first_stage_epochs);
        if (e % 5 == 0)
            std::cout << "epoch " << log.epoch << "  loss " << log.mean_loss << "  train acc "
                      << log.train_accuracy << "\n";
    }

    std::cout << "\nangle-based operator scores (vs base snapshot):\n";
    ShrinkConfig shrink_cfg;
    shrink_cfg.samples_per_op = 50;
    shrink_cfg.train = train;
    for (const auto id : space.all_operator_ids()) {
        Rng rng(Rng::mix(2, id.edge * 8 + id.slot));
        const OperatorScore s = score_operator(id, space, store, 50, rng, shrink_cfg);
        std::cout << "  edge " << id.edge << " slot " << id.slot << " ("
                  << to_string(space.edge(id.edge).ops[*space.find_slot(id)].kind)
                  << "): " << s.mean << " rad\n";
    }

    shrink_cfg.threshold = 100;
    shrink_cfg.drop_per_iter = 2;
    shrink_cfg.train.first_stage_epochs = 20;
    shrink_cfg.train.later_stage_epochs = 3;
    const ShrinkState state = run_abs(space, shrink_cfg, data, 1);
    std::cout << "\nshrunk from " << space_size(space) << " to " << space_size(state.space)
              << " in " << state.log.size() << " iterations (" << state.stop_reason << ")\n";
    for (const auto& rec : state.log) {
        std::cout << "  iteration " << rec.iteration << " removed";
        for (const auto id : rec.removed) std::cout << " (" << id.edge << "," << id.slot << ")";
        std::cout << "  -> |G| = " << rec.size_after << "\n";
    }
    return 0;
}
