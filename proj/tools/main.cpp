// CLI front end; subcommands are wired up in cli.hpp.
#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::puts("cadmm: CLI not wired yet");
  return 1;
}
