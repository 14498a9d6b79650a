// placeholder; filled in once the library is complete
