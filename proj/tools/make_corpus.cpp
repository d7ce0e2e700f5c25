#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "rnnlab/textgen.hpp"

// Writes a deterministic synthetic text corpus for character-model runs.
int main(int argc, char** argv) {
    CLI::App app{"synthetic text corpus generator"};
    std::string out = "corpus.txt";
    std::uint64_t seed = 20250809;
    std::size_t bytes = 1 << 20;
    app.add_option("--out", out, "output path");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--bytes", bytes, "corpus size in bytes");
    CLI11_PARSE(app, argc, argv);

    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) {
        std::cerr << "cannot write " << out << "\n";
        return 2;
    }
    f << rnnlab::synth_text(seed, bytes);
    std::cout << "wrote " << bytes << " bytes to " << out << "\n";
    return 0;
}
