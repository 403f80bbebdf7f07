// CLI entry point; subcommands are filled in as the library lands.
#include <cstdio>

int main() {
    std::puts("bislot: no subcommands wired up yet");
    return 0;
}
