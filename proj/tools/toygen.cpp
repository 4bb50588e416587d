// hwgen-toygen: writes a synthetic multi-style word-image corpus for smoke
// tests and the end-to-end toy protocol.

#include <CLI11.hpp>

#include <iostream>

#include "hwgen/toydata.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic handwriting-style corpus generator"};
    std::string out_dir = "toy_corpus";
    hwgen::ToyCorpusConfig cfg;
    app.add_option("--out-dir", out_dir);
    app.add_option("--writers", cfg.writers)->check(CLI::Range(2, 4));
    app.add_option("--train-words", cfg.train_words_per_writer);
    app.add_option("--test-words", cfg.test_words_per_writer);
    app.add_option("--unseen-samples", cfg.unseen_samples);
    app.add_flag("!--no-unseen", cfg.include_unseen_writer, "skip the unseen-style split");
    CLI11_PARSE(app, argc, argv);

    try {
        const std::string manifest = hwgen::make_toy_corpus(out_dir, cfg);
        std::cout << "toy corpus written: " << manifest << "\n";
        return 0;
    } catch (const hwgen::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
