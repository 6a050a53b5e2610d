#include "commands.hpp"

int main(int argc, char** argv) { return aop::cli::main(argc, argv); }
