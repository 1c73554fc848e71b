#include <iostream>

#include "supmae/run/dispatch.hpp"

int main(int argc, char** argv) { return supmae::run::dispatch(argc, argv, std::cout, std::cerr); }
