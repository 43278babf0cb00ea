#include <iostream>

#include "ocpfem/app.hpp"

int main(int argc, char** argv) { return ocpfem::cli_main(argc, argv, std::cout, std::cerr); }
