#include "cli_app.hpp"

int main(int argc, char** argv) { return camt::cli::run_cli(argc, argv); }
