#include <iostream>

#include "ricpr/app.hpp"

int main(int argc, char** argv)
{
    return ricpr::run_cli(argc, argv, std::cerr);
}
