# Empty file to mark directory as Python package 