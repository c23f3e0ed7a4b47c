# Result export module
