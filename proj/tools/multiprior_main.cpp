// Placeholder entry point; subcommands land with the pipeline modules.
#include <cstdio>

int main() {
  std::puts("multiprior: no subcommands wired yet");
  return 1;
}
