// Serves a built-in environment over the line-delimited JSON protocol on
// stdin/stdout, so it can be used as `external:owqe-env-server <id>`.

#include <iostream>

#include "owqe/envs.hpp"
#include "owqe/external_env.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: owqe-env-server <pendulum|cartpole>\n";
    return 2;
  }
  try {
    owqe::EnvServer server(owqe::make_environment(argv[1]));
    server.serve(std::cin, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "owqe-env-server: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
