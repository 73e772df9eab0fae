// Builds a document map for a bundle with the offline agents, then answers
// one question through tri-path retrieval and the reflective loop.
//
//   dmap_example <bundle-dir> "<question>"

#include <iostream>

#include "dmap/dmap.hpp"
#include "dmap/offline_agents.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: " << argv[0] << " <bundle-dir> <question>\n";
        return 64;
    }
    try {
        const dmap::fs::path root = argv[1];
        auto bundle = dmap::load_bundle(root);

        auto llm = dmap::offline::make_backend();
        auto built = dmap::build_map(bundle, *llm);
        for (const auto& w : built.warnings) std::cerr << "warning: " << w << "\n";

        dmap::MockEmbedder text(7, 32, "mock-text"), visual(8, 32, "mock-visual");
        auto index = dmap::build_index(built.map, text, visual, root).index;
        auto tree = dmap::render_summary_tree(built.map);
        std::cout << tree.text() << "\n\n";

        dmap::QueryContext ctx{built.map, index, tree, *llm, text, visual};
        dmap::AnswerConfig cfg;
        cfg.bundle_root = root;
        auto answer = dmap::answer_query(argv[2], ctx, cfg);

        std::cout << "Q: " << argv[2] << "\nA: " << answer.answer << "\n";
        std::cout << "rounds: " << answer.rounds.size() << ", evidence:";
        for (const auto& id : answer.rounds.back().evidence.ids()) std::cout << " " << id;
        std::cout << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
