#include "cli_app.hpp"

int main(int argc, char** argv) { return aladin::cli::run_cli(argc, argv); }
