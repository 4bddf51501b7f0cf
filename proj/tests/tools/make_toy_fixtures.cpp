// Regenerates the toy corpus and its replay session, or checks that the
// checked-in copies are current.
#include "toy.hpp"

#include "forge/bytes.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace forge;

namespace {

void generate(const fs::path& dir) {
    testing::write_toy_corpus(dir);
    testing::record_toy_session(dir, testing::template_dir()).save(dir / "session.json");
}

std::vector<fs::path> listing(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3 || (std::string(argv[1]) != "write" && std::string(argv[1]) != "check")) {
        std::cerr << "usage: make_toy_fixtures write|check DIR\n";
        return 2;
    }
    const fs::path target = argv[2];
    try {
        if (std::string(argv[1]) == "write") {
            generate(target);
            std::cout << "wrote toy fixtures to " << target << "\n";
            return 0;
        }
        testing::TempDir fresh;
        generate(fresh.path());
        const auto want = listing(fresh.path());
        if (want != listing(target)) {
            std::cerr << "file list differs from " << target << "\n";
            return 1;
        }
        for (const auto& rel : want) {
            if (read_file(fresh.path() / rel) != read_file(target / rel)) {
                std::cerr << "stale fixture: " << rel << "\n";
                return 1;
            }
        }
        std::cout << "toy fixtures are current (" << want.size() << " files)\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
