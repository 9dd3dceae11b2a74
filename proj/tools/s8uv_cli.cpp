#include "s8uv/cli.hpp"

int main(int argc, char** argv) { return s8uv::app::cli_dispatch(argc, argv); }
