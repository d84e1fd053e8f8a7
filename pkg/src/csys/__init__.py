"""C-Systems: controlled-grammar checking of UML models."""
